import logging

import runez
import yaml

LOG = logging.getLogger(__name__)

MODES = ("analyze", "tune-window", "fairness", "optimize", "simulate", "compare")
MODE_ALIASES = {"analytic": "analyze", "compare-baselines": "compare"}

DEFAULT_CONFIG = """
seed: 1
replicates: 1
rng: pcg64

wifi:
  window: 16
  max-stage: 6
  slot-us: 9
  sifs-us: 16
  difs-us: 34
  pifs-us: 25
  rts-bits: 288
  cts-bits: 352
  header-bits: 400
  ack-bits: 364
  rate-mbps: 54
  delay-us: 0.1
  payload-bytes: 1500

nru:
  window: optimal  # integer, 'optimal' (equal airtime with one WiFi node) or 'cat4' (class default 16)
  max-stage: 6
  icca-slots: 8
  silent-us: 16
  mcot-ms: 8
  gnb-slot-ms: 0.25
  priority-class: 3
  access-form: renewal
  cot-adjust-ms: 2

scenario:
  channels: 1
  wifi-nodes: 10  # one value for all channels, or one per channel
  bandwidth-mhz: 20
  dl-users: 5
  ul-users: 5
  distance-m: [10, 2000]
  carrier-ghz: 5
  fading: true
  p-avg-dbm: 23
  p-gnb-max-dbm: 35
  p-dk-max-dbm: 23
  fairness: true

allocator:
  max-outer: 500
  tolerance: 1.0e-6
  inner-tolerance: 1.0e-8
  alpha-step: 1.0

mac-sim:
  horizon-slots: 1000000

methods: [proposed]

analyze:
  methods: [proposed, cat4-lbt, cot-adjust]

compare:
  methods: [proposed, etep, etop, otep]
"""


class Config:
    """Overall config, the 1st found (most specific) setting wins"""

    def __init__(self, paths=None, mode=None):
        """
        Parameters
        ----------
        paths : str | list | None
            Path(s) to config file(s)
        mode : str | None
            Run mode, settings under a top-level block named after it take precedence
        """
        self.paths = runez.flattened(paths, split=",")
        self.mode = mode
        self.default = ConfigSource("default config", DEFAULT_CONFIG)
        self._sources = []  # type: list[ConfigSource]
        self.by_path = {}
        for path in self.paths:
            self.load(path)

    def __repr__(self):
        return "%s [%s]" % (runez.plural(self._sources, "config source"), self.mode or "no mode")

    @property
    def mode(self):
        return self._mode

    @mode.setter
    def mode(self, value):
        value = MODE_ALIASES.get(value, value)
        if value is not None and value not in MODES:
            runez.abort("Unknown mode '%s', expecting one of: %s" % (runez.red(value), ", ".join(MODES)))

        self._mode = value

    def get_value(self, *key, by_mode=True):
        """
        Parameters
        ----------
        key : str | tuple
            Key to look up, tuple represents hierarchy, ie: a/b -> (a, b)
        by_mode : bool
            If True, value can be overridden per mode

        Returns
        -------
            Associated value, if any
        """
        value, _ = self.get_entry(*key, by_mode=by_mode)
        return value

    def get_entry(self, *key, by_mode=True):
        """
        Returns
        -------
        (str | int | float | bool | dict | list | None, ConfigSource | None)
            Associated value (if any), together with the source that defined it
        """
        value, source, _ = self._lookup(key, by_mode)
        return value, source

    def _lookup(self, key, by_mode):
        key = _split_key(key)
        keys = ((self.mode, *key), key) if by_mode and self.mode else (key,)
        for k in keys:
            for source in self._sources:
                v = source.get_value(k)
                if v is not None:
                    return v, source, k

        for k in keys:
            v = self.default.get_value(k)
            if v is not None:
                return v, self.default, k

        return None, None, key

    def located(self, key, problem, index=None):
        """Error message pointing to where 'key' is configured"""
        _, source, path = self._lookup(key, True)
        name = "/".join(_split_key(key))
        if index is not None:
            name += "[%s]" % index

        if source is None:
            return "%s: %s" % (name, problem)

        return "%s %s: %s" % (source.location(path, index), name, problem)

    def invalid(self, key, problem, index=None):
        runez.abort(self.located(key, problem, index=index))

    def get_number(self, *key, kind=float, lo=None, hi=None, positive=False):
        """Numeric value of 'key', aborting with the config location when missing or out of range"""
        value = self.get_value(*key)
        return self.checked_number(key, value, kind=kind, lo=lo, hi=hi, positive=positive)

    def checked_number(self, key, value, kind=float, lo=None, hi=None, positive=False, index=None):
        if value is None:
            self.invalid(key, "is not configured", index=index)

        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.invalid(key, "expecting a number, got '%s'" % value, index=index)

        if kind is int and int(value) != value:
            self.invalid(key, "expecting an integer, got %s" % value, index=index)

        if positive and not value > 0:
            self.invalid(key, "%s must be > 0" % value, index=index)

        if (lo is not None and value < lo) or (hi is not None and value > hi):
            self.invalid(key, "%s is out of range [%s, %s]" % (value, lo, hi), index=index)

        return kind(value)

    def get_choice(self, *key, choices):
        value = self.get_value(*key)
        if value not in choices:
            self.invalid(key, "'%s' is not one of: %s" % (value, ", ".join(str(x) for x in choices)))

        return value

    def get_list(self, *key):
        return runez.flattened(self.get_value(*key), split=",")

    def config_files_report(self):
        """One-liner describing which config files are used, if any"""
        if self._sources:
            return "Config files: %s" % runez.joined(self._sources, delimiter=", ")

        return "no config"

    def represented(self):
        """Textual (yaml) representation of all configs"""
        result = []
        for source in runez.flattened(self._sources, self.default):
            result.append("%s:" % runez.bold(source))
            result.append(source.represented())

        return runez.joined(result, delimiter="\n")

    def load(self, path, base=None):
        if path:
            front = False
            if path.startswith("+"):
                front = True
                path = path[1:]

            path = runez.to_path(runez.resolved_path(path, base=base))
            if not path.exists():
                runez.abort("Config file %s does not exist" % runez.red(runez.short(path)))

            source = ConfigSource(path, path.read_text())
            if front:
                self._sources.insert(0, source)

            else:
                self._sources.append(source)

            self.by_path[str(path)] = source
            for include in runez.flattened(source.get_value("include"), split=True):
                self.load(include, base=path.parent)


class ConfigSource:
    """Settings from one config file"""

    def __init__(self, source, text):
        self.source = source
        self.data = parsed_yaml(text, source) or {}
        self._root = yaml.compose(text) if self.data else None
        if not isinstance(self.data, dict):
            runez.abort("Config %s must be a mapping, not %s" % (runez.bold(runez.short(source)), type(self.data).__name__))

    def __repr__(self):
        return runez.short(self.source)

    def represented(self):
        """Textual (yaml) representation of this config"""
        return yaml.safe_dump(self.data, width=140)

    def get_value(self, key):
        """
        Parameters
        ----------
        key : str | tuple
            Key to look up, tuple represents hierarchy, ie: a/b -> (a, b)

        Returns
        -------
        str | int | float | bool | dict | list | None
            Associated value, if any
        """
        return self._deep_get(self.data, _split_key(key))

    def _deep_get(self, data, key):
        if not key or not isinstance(data, dict):
            return None

        value = data.get(key[0])
        if len(key) > 1:
            return self._deep_get(value, key[1:])

        return value

    def line_of(self, key, index=None):
        """1-based line where 'key' (and optionally item 'index' of its list value) is defined, if known"""
        node = self._root
        for part in _split_key(key):
            if not isinstance(node, yaml.MappingNode):
                return None

            node = next((v for k, v in node.value if k.value == part), None)

        if index is not None and isinstance(node, yaml.SequenceNode) and index < len(node.value):
            node = node.value[index]

        return node.start_mark.line + 1 if node is not None else None

    def location(self, key, index=None):
        line = self.line_of(key, index=index)
        if line is None:
            return str(self)

        return "%s:%s" % (self, line)


def parsed_yaml(text, source):
    try:
        return yaml.safe_load(text)

    except Exception as e:
        runez.abort("Invalid yaml in %s: %s" % (runez.bold(runez.short(source)), e))


def _split_key(key):
    """('a/b', 'c') -> ('a', 'b', 'c')"""
    if isinstance(key, str):
        key = (key,)

    return tuple(part for k in key for part in str(k).split("/") if part)


class NCG:
    """
    Global settings for nru-coexist

    Attributes
    ----------
    config : nru_coexist.config.Config
        Global configuration
    """

    config = Config()

    @classmethod
    def grab_config(cls, paths=None, mode=None):
        cls.config = Config(paths, mode=mode)

    @classmethod
    def select_mode(cls, mode):
        cls.config.mode = mode
        LOG.debug("Mode: %s, %s", cls.config.mode, cls.config.config_files_report())
