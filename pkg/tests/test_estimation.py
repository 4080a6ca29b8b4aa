import math

import numpy as np
import pytest

from oracles import fd_gradient

from nfsparse import estimation as est
from nfsparse import geometry as g
from nfsparse.channel import PathParam, SdaPoint, realize, received_pilot, steering_approx

LAM = 0.01
N = 33


@pytest.fixture(scope="module")
def usa_dict(usa5):
    return est.build_dictionary(usa5, 0.05)


@pytest.fixture(scope="module")
def nsa_dict(nsa10):
    return est.build_dictionary(nsa10, 0.05)


# -- dictionaries -------------------------------------------------------------


def test_atoms_unit_modulus_and_gram_diagonal(usa_dict, nsa_dict):
    for d in (usa_dict, nsa_dict):
        np.testing.assert_allclose(np.abs(d.atoms), 1.0, atol=1e-12)
        np.testing.assert_allclose(np.linalg.norm(d.atoms, axis=0) ** 2, N, rtol=1e-12)


def test_column_ordering(usa_dict):
    S, T = usa_dict.shape
    assert usa_dict.n_atoms == S * T
    for s, t in [(0, 0), (1, 5), (S - 1, T - 1)]:
        col = s * T + t
        want = steering_approx(usa_dict.layout, b=[usa_dict.b_grid[s]], theta=[usa_dict.theta_grid[t]])[:, 0]
        np.testing.assert_allclose(usa_dict.atoms[:, col], want, atol=1e-12)
        assert usa_dict.point(col) == SdaPoint(usa_dict.b_grid[s], usa_dict.theta_grid[t])


def test_usa_minimum_angle_grid_equals_n(usa5):
    assert est.minimum_grid(usa5, 0.05)[1] == N
    d = est.build_dictionary(usa5, 0.05, S=1, T=33)
    assert d.theta_grid[16] == 0.0
    np.testing.assert_array_equal(d.atoms[:, 16], np.ones(N))
    assert d.theta_grid.min() > -1 / 5 and d.theta_grid.max() < 1 / 5


def test_undersampled_grid_names_minimum(usa5):
    with pytest.raises(ValueError, match="T >= 33"):
        est.build_dictionary(usa5, 0.05, S=1, T=32)


def test_nsa_grid_spans_full_range(nsa_dict):
    T = nsa_dict.theta_grid.size
    assert nsa_dict.theta_grid[0] == pytest.approx(-1 + 1 / T)
    assert nsa_dict.theta_grid[-1] == pytest.approx(1 - 1 / T)
    assert nsa_dict.b_grid[0] == 0.0 and nsa_dict.b_grid[-1] < 0.05


def test_adjacent_angle_coherence_is_dirichlet(usa5):
    d = est.build_dictionary(usa5, 0.05, S=1, T=66)
    coh = abs(np.vdot(d.atoms[:, 10], d.atoms[:, 11])) / N
    assert coh == pytest.approx(1 / (N * math.sin(math.pi / (2 * N))), rel=1e-12)


def test_circular_layout_rejected():
    with pytest.raises(ValueError):
        est.build_dictionary(g.build_uca(9, LAM), 0.05)


# -- SDA-OMP ------------------------------------------------------------------


def test_omp_single_atom(usa_dict):
    col = 37
    y = 0.8j * usa_dict.atoms[:, col]
    r = est.sda_omp(y, usa_dict, 1)
    assert r.support == (col,)
    assert r.gains[0] == pytest.approx(0.8j)
    assert est.nmse(r.channel, y) <= -80


def test_omp_zero_input(usa_dict):
    r = est.sda_omp(np.zeros(N), usa_dict, 2)
    np.testing.assert_array_equal(r.channel, 0)
    assert len(set(r.support)) == 2


@pytest.mark.parametrize("bad", [0, N + 1])
def test_omp_rejects_path_count(usa_dict, bad):
    with pytest.raises(ValueError):
        est.sda_omp(np.ones(N), usa_dict, bad)


def test_omp_residual_orthogonal_and_shrinking(nsa_dict, rng):
    y = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    norms = [np.linalg.norm(y)]
    for L in range(1, 9):
        r = est.sda_omp(y, nsa_dict, L)
        A = nsa_dict.atoms[:, list(r.support)]
        res = y - r.channel
        assert np.linalg.norm(A.conj().T @ res) <= 1e-8 * np.linalg.norm(y)
        norms.append(np.linalg.norm(res))
        assert len(set(r.support)) == L
    assert np.all(np.diff(norms) < 0)


def test_channel_is_synthesis_of_paths(nsa_dict, rng):
    y = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    r = est.sda_omp(y, nsa_dict, 3)
    synth = sum(gain * steering_approx(nsa_dict.layout, b=[b], theta=[t])[:, 0] for gain, b, t in r.paths)
    np.testing.assert_allclose(r.channel, synth, atol=1e-10)


def test_translation_by_one_angle_step(nsa_dict):
    T = nsa_dict.theta_grid.size
    for col in (3 * T + 100, 7 * T + 400):
        for shift in (0, 1):
            r = est.sda_omp(nsa_dict.atoms[:, col + shift], nsa_dict, 1)
            assert r.support == (col + shift,)


def test_rank_deficient_support_warns(usa5):
    atom = steering_approx(usa5, SdaPoint(0.0, 0.0))
    W = np.column_stack([atom, atom, steering_approx(usa5, SdaPoint(0.0, 0.1))])
    d = est.Dictionary(W, np.zeros(1), np.array([0.0, 0.0, 0.1]), usa5)
    with pytest.warns(RuntimeWarning, match="rank-deficient"):
        r = est.sda_omp(atom, d, 2)
    np.testing.assert_allclose(r.channel, atom, atol=1e-8)


def test_farfield_on_grid_recovery(nsa10):
    ff = est.farfield_dictionary(nsa10)
    assert ff.shape[0] == 1
    y = (0.3 - 0.4j) * ff.atoms[:, 211]
    r = est.farfield_omp(y, nsa10, 1, dictionary=ff)
    assert r.support == (211,) and r.b[0] == 0.0
    assert est.nmse(r.channel, y) <= -80


# -- SDA-ISRCE ----------------------------------------------------------------


def test_isrce_fixed_point_on_grid(nsa_dict):
    col = 4 * nsa_dict.theta_grid.size + 300
    y = (1 - 0.5j) * nsa_dict.atoms[:, col]
    init = est.sda_omp(y, nsa_dict, 1)
    out = est.sda_isrce(y, nsa_dict.layout, init, sigma2=0.0)
    b0, t0 = nsa_dict.coords([col])
    assert out.n_paths == 1 and out.flag is None
    assert out.b[0] == pytest.approx(b0[0], abs=1e-9)
    assert out.theta[0] == pytest.approx(t0[0], abs=1e-10)
    assert est.nmse(out.channel, y) <= -80


def _surrogate(layout, rng, L=3):
    y = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    dw = rng.uniform(0.01, 2.0, L)
    return est._Surrogate(layout.positions, LAM, y, dw)


def test_isrce_gradient_matches_finite_differences(nsa10):
    rng = np.random.default_rng(56)
    for _ in range(100):
        sur = _surrogate(nsa10, rng)
        L = sur.dw.size
        u = rng.uniform(0, 0.05, L) * sur.b_scale
        v = rng.uniform(-0.9, 0.9, L) * sur.t_scale
        _, gu, gv = sur.value_grad(u, v)
        z = np.concatenate([u, v])
        fd = fd_gradient(lambda w: sur.value_grad(w[:L], w[L:])[0], z, step_scale=1e-6)
        an = np.concatenate([gu, gv])
        assert np.linalg.norm(an - fd) / np.linalg.norm(fd) <= 1e-4


def test_gain_update_is_exact_minimizer(nsa10, rng):
    sur = _surrogate(nsa10, rng)
    u = np.array([0.01, 0.02, 0.04]) * sur.b_scale
    v = np.array([-0.3, 0.1, 0.5]) * sur.t_scale
    val, _, _ = sur.value_grad(u, v)
    A = est.steering_matrix(sur.x, LAM, u / sur.b_scale, v / sur.t_scale)

    def cost(gam):
        return np.linalg.norm(sur.y - A @ gam) ** 2 + np.sum(sur.dw * np.abs(gam) ** 2)

    M = np.diag(sur.dw) + A.conj().T @ A
    z = np.linalg.solve(M, A.conj().T @ sur.y)
    assert cost(z) - np.linalg.norm(sur.y) ** 2 == pytest.approx(val, rel=1e-10)
    for _ in range(20):
        dz = 1e-3 * (rng.standard_normal(3) + 1j * rng.standard_normal(3))
        assert cost(z + dz) > cost(z)


def test_isrce_prunes_weak_paths(nsa_dict, rng):
    T = nsa_dict.theta_grid.size
    y = nsa_dict.atoms[:, 2 * T + 200]
    y = received_pilot(y, 1e-4, rng)
    init = est.sda_omp(y, nsa_dict, 4)
    out = est.sda_isrce(y, nsa_dict.layout, init, sigma2=1e-4)
    assert out.n_paths <= init.n_paths
    assert out.n_paths >= 1
    power = np.abs(out.gains) ** 2
    assert np.all(power > est.IsrceParams().rho_rel * power.max())
    assert set(out.support) <= set(init.support)


def test_isrce_all_pruned_flag(nsa_dict):
    y = nsa_dict.atoms[:, 50]
    init = est.sda_omp(y, nsa_dict, 2)
    out = est.sda_isrce(y, nsa_dict.layout, init, 1e-2, est.IsrceParams(rho_abs=1e9))
    assert out.flag == "all-paths-pruned"
    assert out.n_paths == 0
    np.testing.assert_array_equal(out.channel, 0)


def test_isrce_rejects_bad_input(nsa_dict):
    init = est.sda_omp(nsa_dict.atoms[:, 5], nsa_dict, 1)
    empty = est.EstimateResult((), np.zeros(0, complex), np.zeros(0), np.zeros(0), np.zeros(N, complex), 0)
    with pytest.raises(ValueError):
        est.sda_isrce(nsa_dict.atoms[:, 5], nsa_dict.layout, empty, 0.1)
    y = nsa_dict.atoms[:, 5].copy()
    y[3] = np.nan
    with pytest.raises(FloatingPointError):
        est.sda_isrce(y, nsa_dict.layout, init, 0.1)


def test_varpi_resolution():
    p = est.IsrceParams()
    assert p.resolve_varpi(0.1) == pytest.approx(10.0)
    assert math.isinf(p.resolve_varpi(0.0))
    assert est.IsrceParams(varpi=3.0).resolve_varpi(0.1) == 3.0
    assert est.IsrceParams(varpi_scale=330).resolve_varpi(1.0) == 330


def test_isrce_beats_omp_off_grid(nsa_dict):
    # one path halfway between two angle samples and two distance samples
    lay = nsa_dict.layout
    T = nsa_dict.theta_grid.size
    t_idx, s_idx = 420, 3
    theta = 0.5 * (nsa_dict.theta_grid[t_idx] + nsa_dict.theta_grid[t_idx + 1])
    b = 0.5 * (nsa_dict.b_grid[s_idx] + nsa_dict.b_grid[s_idx + 1])
    h = steering_approx(lay, SdaPoint(b, theta))
    assert T > t_idx + 1
    sigma2 = N * 10 ** (-20 / 10) / N
    rng = np.random.default_rng(77)
    omp, isr = [], []
    for _ in range(200):
        y = received_pilot(h, sigma2, rng)
        init = est.sda_omp(y, nsa_dict, 2)
        omp.append(est.nmse_ratio(init.channel, h))
        isr.append(est.nmse_ratio(est.sda_isrce(y, lay, init, sigma2).channel, h))
    assert est.mean_nmse_db(isr) < est.mean_nmse_db(omp)


# -- baselines and metrics ----------------------------------------------------


def test_ls_is_identity():
    y = np.arange(4) + 1j
    out = est.ls_estimate(y)
    np.testing.assert_array_equal(out, y)
    assert out is not y
    assert est.nmse(out, y) == est.NMSE_FLOOR_DB


def test_ls_noise_identity():
    rng = np.random.default_rng(4)
    h = np.exp(2j * np.pi * rng.uniform(size=N))
    ratios = [est.nmse_ratio(est.ls_estimate(received_pilot(h, 1.0, rng)), h) for _ in range(10_000)]
    assert est.mean_nmse_db(ratios) == pytest.approx(0.0, abs=0.1)


def test_genie_exact_model_is_exact(nsa10):
    paths = (PathParam(0.7 + 0.1j, 12.0, 0.3), PathParam(-0.2j, 55.0, -0.6))
    h = realize(nsa10, paths).vector
    r = est.genie_ls(h, nsa10, paths)
    assert est.nmse(r.channel, h) <= -100
    np.testing.assert_allclose(r.gains, [0.7 + 0.1j, -0.2j], atol=1e-10)
    approx = est.genie_ls(h, nsa10, paths, model="approx")
    assert est.nmse(approx.channel, h) > est.nmse(r.channel, h)
    with pytest.raises(ValueError):
        est.genie_ls(h, nsa10, paths, model="planar")


def test_genie_duplicate_paths_regularized(nsa10):
    paths = (PathParam(1.0, 20.0, 0.2), PathParam(1.0, 20.0, 0.2))
    h = realize(nsa10, paths).vector
    with pytest.warns(RuntimeWarning):
        r = est.genie_ls(h, nsa10, paths)
    assert est.nmse(r.channel, h) <= -80


def test_nmse_examples():
    h = np.array([1.0, 2j, -1.0])
    assert est.nmse(h, h) == -120.0
    assert est.nmse(np.zeros(3), h) == pytest.approx(0.0, abs=1e-12)
    assert est.nmse(h * 1.01, h) == pytest.approx(-40.0, abs=1e-9)
    assert est.mean_nmse_db([0.1, 0.001]) == pytest.approx(10 * math.log10(0.0505))


def test_nmse_csv(tmp_path):
    path = tmp_path / "nmse.csv"
    est.write_nmse_csv(path, [(10, "sda-omp", -7.5, 200), (10.0, "ls", -7.1, 200)])
    assert path.read_bytes().decode() == "snr_db,method,nmse_db,trials\n10.0,sda-omp,-7.5,200\n10.0,ls,-7.1,200\n"
