# Make the tests directory a proper Python package 