from galikit.cli import main

main()
