from encx.cli import main

main()
