"""Convergence study driver on reduced problem sizes."""

import io

import numpy as np
import pytest

from pfcfem.model import ModelParams
from pfcfem.studies import (STUDY_HEADER, StudyResult, StudyRow,
                            default_study_params, render_table, space_study,
                            time_study, write_study_csv)

LENGTH = 4 * np.pi


def quick_params(flow):
    return ModelParams(xi=1.0, alpha=-1.0, gamma=0.2, d0=25.0, dt=1e-2,
                       flow=flow)


@pytest.mark.parametrize("flow", ["allen-cahn", "cahn-hilliard"])
def test_time_study_first_order_small(flow):
    result = time_study(params=quick_params(flow), cells=32,
                        dts=(2.0**-4, 2.0**-5, 2.0**-6),
                        reference_dt=2.0**-10, horizon=2.0**-2)
    assert result.kind == "time"
    assert [r.resolution for r in result.rows] == [2.0**-4, 2.0**-5, 2.0**-6]
    assert result.rows[0].rate_phi is None
    for row in result.rows[1:]:
        assert 0.7 < row.rate_phi < 1.3
        assert 0.7 < row.rate_psi < 1.3
        assert 0.6 < row.rate_s < 1.4
    # halving dt must shrink every error
    for a, b in zip(result.rows, result.rows[1:]):
        assert b.e_phi < a.e_phi and b.e_psi < a.e_psi


def test_space_study_second_order_small():
    result = space_study(params=quick_params("allen-cahn"),
                         cell_counts=(8, 16, 32), reference_cells=512,
                         dt=2.0**-8, horizon=2.0**-2)
    assert result.kind == "space"
    np.testing.assert_allclose([r.resolution for r in result.rows],
                               [LENGTH / 8, LENGTH / 16, LENGTH / 32])
    for row in result.rows[1:]:
        assert 1.5 < row.rate_phi < 2.5
        assert 1.4 < row.rate_psi < 2.6


def test_default_params_are_gentle():
    p = default_study_params()
    assert p.d0 == 25.0
    assert p.flow.value == "allen-cahn"


def test_csv_format_exact():
    rows = [StudyRow(resolution=0.5, e_phi=0.1, e_psi=0.2, e_s=0.05),
            StudyRow(resolution=0.25, e_phi=0.05, e_psi=0.1, e_s=0.025,
                     rate_phi=1.0, rate_psi=1.0, rate_s=1.0)]
    buf = io.StringIO()
    write_study_csv(buf, StudyResult(kind="time", rows=rows))
    lines = buf.getvalue().splitlines()
    assert lines[0] == STUDY_HEADER
    assert lines[1] == "0.5,0.1,,0.2,,0.05,"  # no rates on the first row
    assert lines[2] == "0.25,0.05,1.0,0.1,1.0,0.025,1.0"


def test_render_table_layout():
    rows = [StudyRow(resolution=0.5, e_phi=0.1, e_psi=0.2, e_s=0.05),
            StudyRow(resolution=0.25, e_phi=0.05, e_psi=0.1, e_s=0.025,
                     rate_phi=1.01, rate_psi=0.99, rate_s=1.0)]
    text = render_table(StudyResult(kind="space", rows=rows))
    lines = text.splitlines()
    assert lines[0].split()[0] == "h"
    assert "--" in lines[1]
    assert "1.01" in lines[2] and "0.99" in lines[2]
