"""
Peak detection on a curve that does have a peak
===============================================

Minimum-norm least squares has a sharp test-risk peak where the number of
samples equals the number of features. Running the peak detector on it
shows what a positive verdict looks like.
"""

from ddlab.analysis import detect_interpolation_peak, minnorm_regression_control
from ddlab.render import emit_curve

curve = minnorm_regression_control(n_features=25, noise_std=0.5, trials=200, seed=0)
for n, risk in zip(curve.capacities, curve.losses):
    print(f"N = {int(n):4d}   risk = {risk:10.3f}")

report = detect_interpolation_peak(curve)
print(report.has_peak, report.peak_capacity, round(report.prominence_fraction, 3))

# a U-shape is not a double descent: the right arm never comes back down
u = detect_interpolation_peak(type(curve)([1, 2, 3, 4, 5], [3.0, 1.0, 2.0, 4.0, 6.0]))
print(u.has_peak, u.classification)

emit_curve([curve], "log", [25], "regression_control.svg", x_label="training set size",
           y_label="test risk")
