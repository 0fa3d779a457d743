import functools

from gelcal import calibration

import _audit


def _wrap(fn, boxed_of):
    @functools.wraps(fn)
    def wrapper(problem, *args, **kwargs):
        result = fn(problem, *args, **kwargs)
        _audit.check_result(result, problem, boxed_of(args, kwargs))
        return result

    return wrapper


def _box_arg(args, kwargs):
    box = kwargs.get("box", args[0] if args else calibration.DEFAULT_BOX)
    return box is not None


calibration.solve_lambda = _wrap(calibration.solve_lambda, _box_arg)
calibration.solve_lambda_quadratic_closed_form = _wrap(calibration.solve_lambda_quadratic_closed_form,
                                                       lambda a, k: False)
calibration.solve_centered = _wrap(calibration.solve_centered, lambda a, k: False)


def pytest_terminal_summary(terminalreporter):
    if _audit.ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_audit.ACCEPTANCE):
            ok, detail = _audit.ACCEPTANCE[k]
            terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    s = _audit.STATS
    terminalreporter.write_line(
        f"calibration audit: {s['solves']} solves, {s['converged']} converged, {s['boxed']} with box, "
        f"max moment residual {s['max_residual']:.2e}, max |sum p - 1| {s['max_sum_error']:.2e}")
