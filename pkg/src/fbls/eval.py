"""Accuracy, confusion matrices and the incremental-training benchmark."""
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .bls import add_feature_and_enhancement, predict, train
from .errors import PreconditionError


@dataclass(frozen=True, eq=False)
class EvalReport:
    """Accuracy on one labelled set plus training timings.

    ``confusion[i, j]`` counts samples of class ``class_labels[i]``
    predicted as ``class_labels[j]``. ``steps`` holds one row per training
    stage (initial training first) when produced by :func:`benchmark`.
    """

    p_a: float
    n_r: int
    n_t: int
    confusion: np.ndarray
    class_labels: tuple
    train_time_s: float = 0.0
    test_time_s: float = 0.0
    extra_step_times_s: tuple = ()
    steps: tuple = field(default=(), compare=False)

    @property
    def total_time_s(self):
        return self.train_time_s + sum(self.extra_step_times_s)

    @property
    def step_ratios(self):
        """Each extra step time divided by the initial training time."""
        if self.train_time_s <= 0:
            return tuple(float("inf") for _ in self.extra_step_times_s)
        return tuple(t / self.train_time_s for t in self.extra_step_times_s)


def accuracy(predicted, truth, class_labels=None):
    """``p_a = n_r / n_t`` and the confusion matrix (rows truth, cols predicted)."""
    predicted = [str(p) for p in predicted]
    truth = [str(t) for t in truth]
    if len(predicted) != len(truth):
        raise PreconditionError(f"{len(predicted)} predictions for {len(truth)} truth labels")
    if not truth:
        raise PreconditionError("accuracy of an empty set")
    if class_labels is None:
        class_labels = sorted(set(truth) | set(predicted))
    class_labels = tuple(class_labels)
    index = {c: i for i, c in enumerate(class_labels)}
    missing = (set(truth) | set(predicted)) - set(index)
    if missing:
        raise PreconditionError(f"labels outside class_labels: {sorted(missing)}")
    confusion = np.zeros((len(class_labels), len(class_labels)), dtype=np.int64)
    np.add.at(confusion, ([index[t] for t in truth], [index[p] for p in predicted]), 1)
    n_r = int(np.trace(confusion))
    n_t = len(truth)
    return EvalReport(n_r / n_t, n_r, n_t, confusion, class_labels)


def evaluate(model, ds):
    """Predict ``ds`` with ``model``; returns the report and elapsed seconds."""
    t0 = time.perf_counter()
    labels, _ = predict(model, ds.x)
    elapsed = time.perf_counter() - t0
    return accuracy(labels, ds.labels, model.class_labels), elapsed


def benchmark(ds, cfg, increments=(), test=None):
    """Time initial training and each ``(n_feat, n_enh)`` increment.

    Only the training calls are timed. Accuracy is measured on ``test``
    when given, otherwise on ``ds``. Each row of ``steps`` records the
    architecture after that stage, its step time, the running total and
    the train/test accuracy.
    """
    increments = [(int(f), int(e)) for f, e in increments]
    if any(f < 0 or e < 0 for f, e in increments):
        raise PreconditionError("increments must be non-negative")

    t0 = time.perf_counter()
    model, state = train(ds, cfg)
    train_time = time.perf_counter() - t0
    times = []

    def row(step, elapsed):
        tr, _ = evaluate(model, ds)
        r = {
            "step": step,
            "n_feature_nodes": model.n_feature_nodes,
            "n_enhancement_nodes": model.n_enhancement_nodes,
            "step_time_s": elapsed,
            "total_time_s": train_time + sum(times),
            "train_p_a": tr.p_a,
        }
        if test is not None:
            r["test_p_a"] = evaluate(model, test)[0].p_a
        return r

    rows = [row(0, train_time)]
    for i, (n_feat, n_enh) in enumerate(increments, start=1):
        t0 = time.perf_counter()
        model, state = add_feature_and_enhancement(model, state, ds, n_feat, n_enh)
        times.append(time.perf_counter() - t0)
        rows.append(row(i, times[-1]))

    report, test_time = evaluate(model, ds if test is None else test)
    return replace(
        report,
        train_time_s=train_time,
        test_time_s=test_time,
        extra_step_times_s=tuple(times),
        steps=tuple(rows),
    )


# ------------------------------------------------------------ output

def format_steps(report):
    """Step table: one row for initial training, one per increment."""
    has_test = any("test_p_a" in r for r in report.steps)
    head = f"{'step':>4} {'feature':>8} {'enhance':>8} {'train_acc':>9}"
    head += f" {'test_acc':>9}" if has_test else ""
    head += f" {'step_s':>9} {'total_s':>9} {'ratio':>6}"
    lines = [head]
    for r in report.steps:
        ratio = "" if r["step"] == 0 else f"{r['step_time_s'] / report.train_time_s:.3f}"
        line = f"{r['step']:>4} {r['n_feature_nodes']:>8} {r['n_enhancement_nodes']:>8} {r['train_p_a']:>9.4f}"
        line += f" {r['test_p_a']:>9.4f}" if has_test else ""
        line += f" {r['step_time_s']:>9.3f} {r['total_time_s']:>9.3f} {ratio:>6}"
        lines.append(line)
    return "\n".join(lines)


def format_report(report):
    lines = [
        f"accuracy   {report.p_a:.6f} ({report.n_r}/{report.n_t})",
        f"train time {report.train_time_s:.3f} s",
        f"test time  {report.test_time_s:.3f} s",
    ]
    if report.extra_step_times_s:
        lines.append(f"total time {report.total_time_s:.3f} s over {len(report.extra_step_times_s)} extra steps")
    if report.steps:
        lines += ["", format_steps(report)]
    return "\n".join(lines)


def report_values(report, prefix=""):
    """Flat ``key -> value`` pairs for a key=value report file."""
    out = {
        f"{prefix}p_a": repr(report.p_a),
        f"{prefix}n_r": report.n_r,
        f"{prefix}n_t": report.n_t,
    }
    if report.train_time_s:
        out["train_time_s"] = repr(report.train_time_s)
    if report.test_time_s:
        out[f"{prefix}time_s"] = repr(report.test_time_s)
    for i, t in enumerate(report.extra_step_times_s, start=1):
        out[f"step.{i}.time_s"] = repr(t)
    if report.extra_step_times_s:
        out["total_time_s"] = repr(report.total_time_s)
    return out


def write_confusion(fh, report):
    """Confusion matrix as CSV: header ``truth,<labels...>``, one row per true class."""
    fh.write("truth," + ",".join(report.class_labels) + "\n")
    for label, counts in zip(report.class_labels, report.confusion):
        fh.write(label + "," + ",".join(str(int(c)) for c in counts) + "\n")
