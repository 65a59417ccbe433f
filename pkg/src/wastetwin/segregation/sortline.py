"""Sorting-cell simulation: seeded object stream through classify, locate,
reach, and pick-place, with one reattempt before skipping an object.

Skipped objects pass through unsorted; their mass is conserved in the report.
Correctly binned food waste accumulates as the volatile-solids charge handed
to the digestor scenarios.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kinematics, vision
from .homography import Homography, pixel_to_world
from .kinematics import ArmModel, ConvergenceError, Pose, ReachabilityError
from .vision import ClassifierModel, WasteClass


class StreamError(ValueError):
    """Malformed stream configuration."""


@dataclass(frozen=True)
class StreamConfig:
    class_mix: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)
    arrival_rate_per_hour: float = 720.0
    mass_median_g: float = 40.0
    mass_sigma: float = 0.5          # lognormal shape
    vs_fraction: float = 0.18        # grams VS per gram of wet food waste
    pick_failure_prob: float = 0.02
    image_width: float = 640.0
    image_height: float = 640.0
    grasp_seconds: float = 1.5
    z_grasp_m: float = 0.03
    home_joints: tuple[float, ...] = (0.0, -0.5, 0.8, 0.0, 0.5, 0.0)

    def __post_init__(self):
        if self.arrival_rate_per_hour <= 0:
            raise StreamError("arrival_rate_per_hour must be > 0")
        if not (0.0 <= self.pick_failure_prob <= 1.0):
            raise StreamError("pick_failure_prob must be in [0, 1]")
        if self.mass_median_g <= 0 or self.mass_sigma < 0:
            raise StreamError("mass parameters must be positive")
        if not (0.0 <= self.vs_fraction <= 1.0):
            raise StreamError("vs_fraction must be in [0, 1]")
        vision.class_mix_array(self.class_mix)


@dataclass
class SortReport:
    n_objects: int
    n_detected: int
    n_accepted: int
    n_binned: int
    n_skipped: int
    n_reattempts: int
    n_ik_failures: int
    threshold: float
    accuracy: float | None
    accuracy_all_detections: float | None
    per_class: dict = field(default_factory=dict)
    throughput_per_hour: float = 0.0
    elapsed_hours: float = 0.0
    mass_in_g: float = 0.0
    mass_binned_g: float = 0.0
    mass_skipped_g: float = 0.0
    bin_mass_g: dict = field(default_factory=dict)
    food_waste_correct_mass_g: float = 0.0
    biodegradable_vs_g: float = 0.0

    def to_dict(self) -> dict:
        return {
            "n_objects": self.n_objects,
            "n_detected": self.n_detected,
            "n_accepted": self.n_accepted,
            "n_binned": self.n_binned,
            "n_skipped": self.n_skipped,
            "n_reattempts": self.n_reattempts,
            "n_ik_failures": self.n_ik_failures,
            "threshold": self.threshold,
            "accuracy": self.accuracy,
            "accuracy_all_detections": self.accuracy_all_detections,
            "per_class": {
                cls.name.lower(): {"tp": c.tp, "tn": c.tn, "fp": c.fp, "fn": c.fn,
                                   "accuracy": c.accuracy}
                for cls, c in self.per_class.items()
            },
            "throughput_per_hour": self.throughput_per_hour,
            "elapsed_hours": self.elapsed_hours,
            "mass_in_g": self.mass_in_g,
            "mass_binned_g": self.mass_binned_g,
            "mass_skipped_g": self.mass_skipped_g,
            "bin_mass_g": self.bin_mass_g,
            "food_waste_correct_mass_g": self.food_waste_correct_mass_g,
            "biodegradable_vs_g": self.biodegradable_vs_g,
        }


def run_sortline(stream: StreamConfig, classifier: ClassifierModel, threshold: float,
                 h: Homography, arm: ArmModel, n_objects: int,
                 seed: int = 0) -> SortReport:
    """Process n_objects through the cell and aggregate the sort report.

    A kinematics failure on one object logs a skip and never aborts the run.
    """
    if n_objects <= 0:
        raise StreamError("n_objects must be positive")
    ss = np.random.SeedSequence(seed)
    stream_ss, classifier_ss, pick_ss = ss.spawn(3)
    stream_rng = np.random.default_rng(stream_ss)
    classifier_rng = np.random.default_rng(classifier_ss)
    pick_rng = np.random.default_rng(pick_ss)

    mix = vision.class_mix_array(stream.class_mix)
    true_idx = stream_rng.choice(vision.N_CLASSES, size=n_objects, p=mix)
    masses = stream_rng.lognormal(np.log(stream.mass_median_g), stream.mass_sigma,
                                  size=n_objects)
    pixels = np.column_stack([
        stream_rng.uniform(0.0, stream.image_width, n_objects),
        stream_rng.uniform(0.0, stream.image_height, n_objects),
    ])
    drawn = vision.classify_batch(classifier, true_idx, threshold, classifier_rng)
    pick_draws = pick_rng.random((n_objects, 2))

    interarrival_s = 3600.0 / stream.arrival_rate_per_hour
    q = np.asarray(stream.home_joints, dtype=float)
    elapsed_s = 0.0
    n_binned = n_skipped = n_reattempts = n_ik_failures = 0
    mass_binned = mass_skipped = 0.0
    bin_mass = {cls: 0.0 for cls in WasteClass}
    food_correct_mass = 0.0
    outcomes_accepted: list[tuple[WasteClass, WasteClass]] = []
    outcomes_detected: list[tuple[WasteClass, WasteClass]] = []

    for i in range(n_objects):
        handling_s = 0.0
        true_cls = WasteClass(int(true_idx[i]))
        binned = False
        if drawn["detected"][i]:
            pred_cls = WasteClass(int(drawn["predicted"][i]))
            outcomes_detected.append((true_cls, pred_cls))
            if drawn["accepted"][i]:
                outcomes_accepted.append((true_cls, pred_cls))
                try:
                    x, y = pixel_to_world(h, (pixels[i, 0], pixels[i, 1]))
                    target = Pose(np.array([x, y, stream.z_grasp_m]), None)
                    q_new = kinematics.inverse_kinematics(
                        arm, target, q, position_only=True, position_tol=1e-4)
                except (ReachabilityError, ConvergenceError):
                    n_ik_failures += 1
                else:
                    travel_s = float(np.max(np.abs(q_new - q))) / arm.max_joint_speed
                    handling_s = 2.0 * travel_s + stream.grasp_seconds
                    attempts = 1
                    success = pick_draws[i, 0] >= stream.pick_failure_prob
                    if not success:
                        n_reattempts += 1
                        attempts = 2
                        handling_s += stream.grasp_seconds
                        success = pick_draws[i, 1] >= stream.pick_failure_prob
                    if success:
                        q = q_new
                        binned = True
                        n_binned += 1
                        mass_binned += masses[i]
                        bin_mass[pred_cls] += masses[i]
                        if pred_cls == true_cls and true_cls == WasteClass.FOOD_WASTE:
                            food_correct_mass += masses[i]
        if not binned:
            n_skipped += 1
            mass_skipped += masses[i]
        elapsed_s += max(interarrival_s, handling_s)

    elapsed_hours = elapsed_s / 3600.0
    acc = acc_detected = None
    per_class: dict = {}
    if outcomes_accepted:
        report = vision.accuracy(outcomes_accepted)
        acc = report.overall
        per_class = report.per_class
    if outcomes_detected:
        acc_detected = vision.accuracy(outcomes_detected).overall

    return SortReport(
        n_objects=n_objects,
        n_detected=int(np.count_nonzero(drawn["detected"])),
        n_accepted=len(outcomes_accepted),
        n_binned=n_binned,
        n_skipped=n_skipped,
        n_reattempts=n_reattempts,
        n_ik_failures=n_ik_failures,
        threshold=threshold,
        accuracy=acc,
        accuracy_all_detections=acc_detected,
        per_class=per_class,
        throughput_per_hour=n_binned / elapsed_hours if elapsed_hours > 0 else 0.0,
        elapsed_hours=elapsed_hours,
        mass_in_g=float(np.sum(masses)),
        mass_binned_g=mass_binned,
        mass_skipped_g=mass_skipped,
        bin_mass_g={cls.name.lower(): g for cls, g in bin_mass.items()},
        food_waste_correct_mass_g=food_correct_mass,
        biodegradable_vs_g=food_correct_mass * stream.vs_fraction,
    )
