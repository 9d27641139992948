# This entry point is used for debug only:
if __name__ == '__main__':
    import sys
    from mimo_feedback.cli import main
    sys.exit(main(sys.argv[1:] + ['--log-level', 'DEBUG']))
