def main():
    import runez

    from nru_coexist.cli import main

    runez.click.protected_main(main)


if __name__ == "__main__":
    main()
