"""The acceptance gate: one test per criterion, full scale.

Each test runs its criterion at the documented sample sizes and prints
the one-line verdict (run pytest with -s or read the captured output).
The whole battery takes roughly half an hour on four cores; deselect it
for the quick loop with `-m "not acceptance"`.

A2 is expected to fail: its distance bar sits below the sampling noise
floor of the prescribed sample size, and the check is kept at the
stated strength rather than widened to pass.
"""

import os

import pytest

from usflab import acceptance

WORKERS = min(4, os.cpu_count() or 1)

pytestmark = pytest.mark.acceptance


def _run(check):
    res = check(WORKERS)
    print(res.line())
    assert res.passed, res.line()


def test_a1_sampler_exactness():
    _run(acceptance.check_a1)


def test_a2_lerw_law_distance():
    _run(acceptance.check_a2)


def test_a3_domain_markov():
    _run(acceptance.check_a3)


def test_a4_popping_order():
    _run(acceptance.check_a4)


def test_a5_exit_floor_battery():
    _run(acceptance.check_a5)


def test_a6_two_point_decay():
    _run(acceptance.check_a6)


def test_a7_lerw_length_scale():
    _run(acceptance.check_a7)


def test_a8_shell_crossings():
    _run(acceptance.check_a8)


def test_a9_pair_plateau():
    _run(acceptance.check_a9)


def test_a10_ball_volume():
    _run(acceptance.check_a10)


def test_a11_box_volume():
    _run(acceptance.check_a11)


def test_a12_counts_and_tail_sum():
    _run(acceptance.check_a12)


def test_a13_capacity_identities():
    _run(acceptance.check_a13)
