def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_ddlab_acceptance", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines, key=lambda s: int(s.split()[2])):
        terminalreporter.write_line(line)
