"""Parameterized synthetic two-machine vibration source.

Healthy vibration is a handful of shaft-rate harmonics plus white noise:

    x(t) = sum_h a_h sin(2 pi h f_r t + phi_h) + sigma n(t),   f_r = RPM / 60

A bearing fault adds an impulse train at (multiplier x f_r): every impulse is
an exponentially decaying sinusoid ringing at the machine's resonance
frequency, with amplitude proportional to the defect size in mm. A per-sensor
gain and one-pole lowpass are applied last, so different sensors on the same
machine see genuinely different signals. Fully deterministic for a given
(params, condition, fault, seed).

The two default machines M1 and M2 differ in harmonic pattern, resonance,
decay, noise floor and sensor chains, which makes them a meaningful
source/target pair for the zero-shot pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import FS, Record, WorkingCondition, default_record_name

OUTER_MULTIPLIER = 3.57
INNER_MULTIPLIER = 5.43


@dataclass(frozen=True)
class SynthMachineParams:
    name: str
    harmonic_amplitudes: tuple
    resonance_hz: float
    impulse_decay: float            # 1/s envelope decay of each impulse
    impulse_gain: float = 4.0       # impulse amplitude per mm of defect
    outer_multiplier: float = OUTER_MULTIPLIER
    inner_multiplier: float = INNER_MULTIPLIER
    noise_sigma: float = 0.1
    sensor_gains: tuple = (1.0, 0.85)
    sensor_lowpass: tuple = (0.05, 0.2)  # one-pole feedback coeff per sensor
    seed: int = 0

    def validate(self):
        if not self.harmonic_amplitudes or any(a <= 0 for a in self.harmonic_amplitudes):
            raise ValueError("harmonic amplitudes must be positive and non-empty")
        if not 0 < self.resonance_hz < FS / 2:
            raise ValueError(f"resonance {self.resonance_hz} Hz outside (0, fs/2)")
        if self.impulse_decay <= 0 or self.impulse_gain <= 0:
            raise ValueError("impulse decay and gain must be positive")
        if self.outer_multiplier <= 0 or self.inner_multiplier <= 0:
            raise ValueError("fault multipliers must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be >= 0")
        if len(self.sensor_gains) != len(self.sensor_lowpass):
            raise ValueError("sensor gain/lowpass lists must align")
        if any(g <= 0 for g in self.sensor_gains):
            raise ValueError("sensor gains must be positive")
        if any(not 0 <= a < 1 for a in self.sensor_lowpass):
            raise ValueError("lowpass coefficients must lie in [0, 1)")
        return self


M1 = SynthMachineParams(
    name="M1", harmonic_amplitudes=(1.0, 0.6, 0.3), resonance_hz=1150.0,
    impulse_decay=400.0, noise_sigma=0.10,
    sensor_gains=(1.0, 0.85), sensor_lowpass=(0.05, 0.2), seed=101)

M2 = SynthMachineParams(
    name="M2", harmonic_amplitudes=(0.9, 0.25, 0.55, 0.2), resonance_hz=950.0,
    impulse_decay=300.0, noise_sigma=0.12,
    sensor_gains=(0.95, 1.1), sensor_lowpass=(0.1, 0.0), seed=202)

DEFAULT_MACHINES = {"M1": M1, "M2": M2}

# desk-scale corpus shape per machine: 2 sensors x 3 speeds x 1 load
DEFAULT_SPEEDS = {"M1": (480.0, 680.0, 1010.0), "M2": (300.0, 540.0, 960.0)}
DEFAULT_LOADS = {"M1": 0.15, "M2": 0.18}
DEFAULT_DEFECTS = {"M1": (1.2, 1.5, 1.8), "M2": (0.8, 1.3, 1.9)}

FAULT_CODES = {"healthy": 0, "inner": 1, "outer": 2}


def _record_rng(params: SynthMachineParams, condition: WorkingCondition,
                fault_type: str, defect_mm: float, extra_seed: int):
    entropy = (params.seed, condition.sensor, int(round(condition.speed_rpm * 16)),
               int(round(condition.load * 1024)), FAULT_CODES[fault_type],
               int(round(defect_mm * 256)), extra_seed)
    return np.random.default_rng(np.random.SeedSequence(entropy))


def _one_pole_lowpass(x: np.ndarray, a: float) -> np.ndarray:
    # y[k] = (1-a) x[k] + a y[k-1]; expanded as a truncated exponential FIR
    # so it vectorizes (truncation error < 1e-8 of the impulse response)
    if a == 0.0:
        return x
    taps = int(np.ceil(np.log(1e-8) / np.log(a))) + 1
    kernel = (1.0 - a) * a ** np.arange(taps)
    return np.convolve(x, kernel)[: x.size]


def synth_machine(params: SynthMachineParams, condition: WorkingCondition,
                  duration_s: float = 1.0, fault_type: str = "healthy",
                  defect_mm: float = 0.0, extra_seed: int = 0) -> Record:
    """Generate one Record for the given machine and working condition."""
    params.validate()
    if condition.machine != params.name:
        raise ValueError(f"condition is for machine {condition.machine!r}, "
                         f"params describe {params.name!r}")
    if not 1 <= condition.sensor <= len(params.sensor_gains):
        raise ValueError(f"machine {params.name} has no sensor {condition.sensor}")
    if fault_type not in FAULT_CODES:
        raise ValueError(f"unknown fault type {fault_type!r}")
    if fault_type == "healthy" and defect_mm != 0.0:
        raise ValueError("healthy records must have defect_mm == 0")
    if fault_type != "healthy" and defect_mm <= 0.0:
        raise ValueError("faulty records need a positive defect_mm")

    rng = _record_rng(params, condition, fault_type, defect_mm, extra_seed)
    n = int(round(duration_s * FS))
    t = np.arange(n, dtype=np.float64) / FS
    f_rot = condition.speed_rpm / 60.0

    x = np.zeros(n, dtype=np.float64)
    for h, amp in enumerate(params.harmonic_amplitudes, start=1):
        x += amp * np.sin(2 * np.pi * h * f_rot * t + rng.uniform(0, 2 * np.pi))

    if fault_type != "healthy":
        mult = params.outer_multiplier if fault_type == "outer" else params.inner_multiplier
        step = FS / (mult * f_rot)  # samples between impulses
        tail = int(np.ceil(np.log(1e4) / params.impulse_decay * FS))
        tau = np.arange(tail, dtype=np.float64) / FS
        ring = np.exp(-params.impulse_decay * tau) * np.sin(2 * np.pi * params.resonance_hz * tau)
        offset = rng.uniform(0.0, 1.0)
        j = 0
        while True:
            pos = int(round((offset + j) * step))
            if pos >= n:
                break
            amp = params.impulse_gain * defect_mm * (1.0 + 0.05 * rng.standard_normal())
            end = min(n, pos + tail)
            x[pos:end] += amp * ring[: end - pos]
            j += 1

    x += params.noise_sigma * rng.standard_normal(n)

    gain = params.sensor_gains[condition.sensor - 1]
    x = gain * _one_pole_lowpass(x, params.sensor_lowpass[condition.sensor - 1])
    return Record(samples=x.astype(np.float32), condition=condition,
                  fault_type=fault_type, defect_mm=defect_mm)


def build_corpus(params: SynthMachineParams, speeds, load: float,
                 sensors=None, healthy_duration_s: float = 50.0,
                 faulty_duration_s: float = 15.0, fault_types=("inner", "outer"),
                 defects=(1.2, 1.5, 1.8), seed: int = 0) -> list:
    """Full corpus for one machine: per (sensor, speed) one healthy record
    plus one faulty record per (fault type, defect size)."""
    params.validate()
    if sensors is None:
        sensors = tuple(range(1, len(params.sensor_gains) + 1))
    records = []
    idx = 0
    for sensor in sensors:
        for speed in speeds:
            cond = WorkingCondition(machine=params.name, sensor=sensor,
                                    speed_rpm=float(speed), load=float(load))
            records.append(synth_machine(params, cond, healthy_duration_s,
                                         extra_seed=seed + idx))
            idx += 1
            for fault in fault_types:
                for defect in defects:
                    records.append(synth_machine(params, cond, faulty_duration_s,
                                                 fault_type=fault, defect_mm=float(defect),
                                                 extra_seed=seed + idx))
                    idx += 1
    for i, rec in enumerate(records):
        rec.name = default_record_name(rec, i)
    return records


def default_corpus(machine_name: str, seed: int = 0) -> list:
    """The stock desk-scale corpus for machine "M1" or "M2"."""
    if machine_name not in DEFAULT_MACHINES:
        raise ValueError(f"no default synthetic machine {machine_name!r}; "
                         f"choose from {sorted(DEFAULT_MACHINES)}")
    params = DEFAULT_MACHINES[machine_name]
    return build_corpus(params, speeds=DEFAULT_SPEEDS[machine_name],
                        load=DEFAULT_LOADS[machine_name],
                        defects=DEFAULT_DEFECTS[machine_name], seed=seed)
