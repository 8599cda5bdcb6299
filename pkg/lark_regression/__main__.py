#!/usr/bin/env python

from lark_regression.lark_cli import main

if __name__ == "__main__":
    main()
