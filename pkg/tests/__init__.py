# mcmin unit, property and command-line tests
