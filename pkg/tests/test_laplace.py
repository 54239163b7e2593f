import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special, stats

from telesched import laplace as lp
from telesched import markov as mk
from telesched import qmath as q
from telesched import sim

LAM_E, LAM_R = 5.0, 2.5


def quad_laplace(pdf, s, upper=math.inf):
    return integrate.quad(lambda t: math.exp(-s * t) * pdf(t), 0, upper, limit=400, epsabs=1e-13, epsrel=1e-12)[0]


# ---- disciplines ----


def test_discipline_names():
    assert lp.Discipline.from_name("FIFO") == lp.FIFO_INF
    assert lp.Discipline.from_name("lifo-po", 4) == lp.lifo_po(4)
    assert lp.Discipline.from_name("fifo-block", 3).overflow == "block"
    with pytest.raises(ValueError):
        lp.Discipline.from_name("lifo-po")
    with pytest.raises(ValueError):
        lp.Discipline.from_name("random", 3)
    with pytest.raises(ValueError):
        lp.fifo_po(0)


# ---- FIFO, unbounded ----


def test_fifo_inf_pdf_normalised_with_mean():
    pdf = lambda t: float(lp.fifo_inf_wait_pdf(LAM_R, LAM_E, t))
    assert integrate.quad(pdf, 0, math.inf)[0] == pytest.approx(1.0, abs=1e-8)
    assert integrate.quad(lambda t: t * pdf(t), 0, math.inf)[0] == pytest.approx(0.4, abs=1e-8)


def test_fifo_inf_unstable():
    for fn in (lp.fifo_inf_laplace, lp.lifo_inf_laplace):
        with pytest.raises(lp.StabilityError):
            fn(5.0, 5.0)
    with pytest.raises(lp.StabilityError):
        lp.fifo_inf_wait_pdf(6.0, 5.0, 1.0)


def test_fifo_inf_laplace_values():
    w = lp.fifo_inf_laplace(LAM_R, LAM_E)
    assert w(0.0) == 1.0
    assert w(0.01) == pytest.approx(2.5 / 2.51, abs=1e-15)
    assert w(0.01) == pytest.approx(0.99602, abs=1e-5)


@pytest.mark.parametrize("s", [0.01, 0.1, 1.0, 3.0])
def test_fifo_inf_laplace_matches_quadrature(s):
    pdf = lambda t: float(lp.fifo_inf_wait_pdf(LAM_R, LAM_E, t))
    quad = quad_laplace(pdf, s)
    assert lp.fifo_inf_laplace(LAM_R, LAM_E)(s) == pytest.approx(quad, abs=1e-10)
    # the opposite sign of s is not a transform of this density
    assert abs(lp.fifo_inf_laplace_sign_flipped(LAM_R, LAM_E, s) - quad) > 1e-3


def test_fifo_inf_laplace_matches_simulation():
    trace = sim.simulate(LAM_R, LAM_E, None, 0, sim.PolicySpec.from_names("fifo", "fifo-po"), 300_000, 4)
    w = sim.wait_samples(trace, "request")
    for s in (0.1, 1.0):
        mean, err = sim.batch_means(np.exp(-s * w))
        assert abs(mean - lp.fifo_inf_laplace(LAM_R, LAM_E)(s)) < 3 * err


# ---- LIFO, unbounded ----


def test_bessel_matches_scipy():
    x = np.concatenate([[0.0, 1e-8, 0.3], np.geomspace(1e-3, 5e3, 300), [699.9, 700.0, 700.1, 1e5]])
    assert np.max(np.abs(lp.bessel_i1e(x) - special.i1e(x)) / np.maximum(special.i1e(x), 1e-300)) < 1e-13
    assert lp.bessel_i1e(-2.0) == pytest.approx(-special.i1e(2.0), rel=1e-14)


def test_lifo_inf_pdf_normalised_and_limit():
    pdf = lambda t: lp.lifo_inf_busy_pdf(LAM_R, LAM_E, t)
    assert integrate.quad(pdf, 0, math.inf, limit=400)[0] == pytest.approx(1.0, abs=1e-6)
    assert pdf(0.0) == LAM_E
    assert pdf(1e-9) == pytest.approx(LAM_E, rel=1e-6)


def test_lifo_inf_pdf_large_time_is_finite():
    v = lp.lifo_inf_busy_pdf(4.9, 5.0, np.array([1e3, 1e5]))
    assert np.all(np.isfinite(v)) and np.all(v >= 0)


@pytest.mark.parametrize("s", [0.01, 0.1, 1.0])
def test_lifo_inf_laplace_matches_quadrature(s):
    quad = quad_laplace(lambda t: lp.lifo_inf_busy_pdf(LAM_R, LAM_E, t), s)
    assert lp.lifo_inf_laplace(LAM_R, LAM_E)(s) == pytest.approx(quad, abs=1e-6)


def test_lifo_inf_laplace_values():
    w = lp.lifo_inf_laplace(LAM_R, LAM_E)
    assert w(0.0) == pytest.approx(1.0, abs=1e-15)
    a = LAM_R + LAM_E + 0.01
    expected = (a - math.sqrt(a * a - 4 * LAM_R * LAM_E)) / (2 * LAM_R)
    assert w(0.01) == pytest.approx(expected, abs=1e-14)
    assert w(0.01) == pytest.approx(0.996032, abs=1e-6)


def test_lifo_inf_matches_simulation():
    trace = sim.simulate(LAM_R, LAM_E, None, 0, sim.PolicySpec.from_names("lifo", "lifo-po"), 300_000, 8)
    w = sim.wait_samples(trace, "request")
    mean, err = sim.batch_means(np.exp(-0.5 * w))
    assert abs(mean - lp.lifo_inf_laplace(LAM_R, LAM_E)(0.5)) < 3 * err
    # histogram against the busy-period density
    w = w[int(len(w) * 0.05):][::7]  # thin to weaken serial correlation
    edges = np.concatenate([np.linspace(0, 2, 21), [4, 10, np.inf]])
    cdf = [0.0] + [integrate.quad(lambda t: lp.lifo_inf_busy_pdf(LAM_R, LAM_E, t), 0, e, limit=200)[0] for e in edges[1:-1]] + [1.0]
    expected = np.diff(cdf) * len(w)
    observed = np.histogram(w, bins=edges)[0]
    assert stats.chisquare(observed, expected * observed.sum() / expected.sum()).pvalue > 0.01


# ---- finite buffers ----


@pytest.mark.parametrize("buf", [1, 2, 3, 5, 10, 20])
@pytest.mark.parametrize("lam_a,lam_s", [(2.5, 5.0), (5.0, 5.0), (7.0, 3.0)])
def test_finite_transforms_match_direct_solve(buf, lam_a, lam_s):
    for s in (0.0, 0.01, 0.3, 2.0):
        for disc in (lp.fifo_po(buf), lp.lifo_po(buf)):
            analytic = lp.transform_for(disc, lam_a, lam_s).joint(s)
            direct = lp.direct_joint_laplace(disc, lam_a, lam_s, s)
            assert analytic == pytest.approx(direct, abs=1e-10)


@pytest.mark.parametrize("buf", [1, 7, 25, 50])
def test_lifo_po_closed_form_matches_recursion(buf):
    for lam_a, lam_s, s in ((2.5, 5.0, 0.01), (5.0, 5.0, 0.0), (9.0, 1.0, 0.5)):
        closed = lp.lifo_po_positions(buf, lam_a, lam_s, s)
        assert closed[0] == pytest.approx(1.0, abs=1e-15) and closed[-1] == 0.0
        assert np.max(np.abs(closed[1:-1] - lp.lifo_po_recursion_solve(buf, lam_a, lam_s, s))) < 1e-10


def test_lifo_po_unreduced_form_disagrees():
    buf = 10
    solved = lp.lifo_po_recursion_solve(buf, LAM_R, LAM_E, 0.01)
    alt = lp.lifo_po_position_unreduced(buf, LAM_R, LAM_E, 0.01, 1)
    assert abs(alt - solved[0]) > 1.0
    assert lp.lifo_po_position_unreduced(buf, LAM_R, LAM_E, 0.01, buf) == math.inf


def test_single_slot_buffers():
    # one slot: the item leaves at the first event of either stream
    for disc in (lp.fifo_po(1), lp.lifo_po(1)):
        w = lp.transform_for(disc, LAM_R, LAM_E)
        assert w.joint(0.2) == pytest.approx(LAM_E / (LAM_E + LAM_R + 0.2), abs=1e-14)
        assert w.p_served == pytest.approx(LAM_E / (LAM_E + LAM_R), abs=1e-14)


def test_lifo_po_converges_to_unbounded():
    for s in (0.01, 0.1, 1.0):
        big = lp.lifo_po_laplace(200, LAM_R, LAM_E).conditioned()(s)
        assert big == pytest.approx(lp.lifo_inf_laplace(LAM_R, LAM_E)(s), abs=1e-6)
    assert lp.fifo_po_laplace(200, LAM_R, LAM_E).conditioned()(0.1) == pytest.approx(
        lp.fifo_inf_laplace(LAM_R, LAM_E)(0.1), abs=1e-6
    )


@pytest.mark.parametrize("buf", list(range(1, 21)))
def test_conditioned_transforms_normalised(buf):
    for disc in (lp.fifo_po(buf), lp.lifo_po(buf)):
        for lam_a, lam_s in ((2.5, 5.0), (5.0, 5.0), (8.0, 2.0)):
            w = lp.transform_for(disc, lam_a, lam_s)
            assert w.conditioned()(0.0) == pytest.approx(1.0, abs=1e-10)
            assert w.p_served == pytest.approx(mk.service_probability(lam_a / lam_s, buf), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    st.sampled_from(["fifo-po", "lifo-po", "fifo-block", "lifo-block"]),
    st.integers(1, 15),
    st.floats(0.1, 10),
    st.floats(0.1, 10),
)
def test_transform_range_and_monotone(name, buf, lam_a, lam_s):
    disc = lp.Discipline.from_name(name, buf)
    w = lp.transform_for(disc, lam_a, lam_s)
    grid = np.linspace(0, 5, 50)
    vals = w.conditioned()(grid)
    assert np.all(vals >= -1e-12) and np.all(vals <= 1 + 1e-10)
    assert np.all(np.diff(vals) <= 1e-12)
    # complete monotonicity spot check: second differences are non-negative
    assert np.all(np.diff(vals, 2) >= -1e-9)


def test_block_transforms_match_direct_solve():
    for name in ("fifo-block", "lifo-block"):
        disc = lp.Discipline.from_name(name, 6)
        for s in (0.0, 0.05, 1.0):
            assert lp.transform_for(disc, 4.0, 5.0).joint(s) == pytest.approx(
                lp.direct_joint_laplace(disc, 4.0, 5.0, s), abs=1e-12
            )


def test_arrival_occupancy_weights():
    w = lp.arrival_occupancy_weights(0.5, 3)
    assert np.allclose(w, np.array([1, 0.5, 0.25, 0.125]) / 1.875)
    assert np.all(np.isfinite(lp.arrival_occupancy_weights(1e6, 400)))


def test_fifo_po_matches_simulation():
    c = mk.DoubleQueueConfig(LAM_E, LAM_R, 0, 10)
    trace = sim.run(c, sim.PolicySpec.from_names("fifo-po", "fifo-po"), 400_000, 12)
    w = sim.wait_samples(trace, "request")
    mean, err = sim.batch_means(np.exp(-0.3 * w))
    assert abs(mean - lp.fifo_po_laplace(10, LAM_R, LAM_E).conditioned()(0.3)) < 3 * err


# ---- phase-type densities ----


@pytest.mark.parametrize("disc", [lp.fifo_po(4), lp.lifo_po(4), lp.lifo_po(10)])
def test_phase_type_pdf_consistent_with_transform(disc):
    pdf = lp.phase_type_wait_pdf(disc, 4.0, 5.0)
    assert integrate.quad(pdf, 0, math.inf, limit=400)[0] == pytest.approx(1.0, abs=1e-7)
    for s in (0.05, 1.0):
        assert quad_laplace(pdf, s) == pytest.approx(lp.transform_for(disc, 4.0, 5.0).conditioned()(s), abs=1e-7)


# ---- fidelity densities ----


def test_fidelity_pdf_preserves_mass():
    curve = q.FidelityCurve(0.5, 0.5, 0.2)
    wait_pdf = lambda t: lp.fifo_inf_wait_pdf(LAM_R, LAM_E, t)
    mass = integrate.quad(lambda x: float(lp.fidelity_pdf_transform(wait_pdf, curve, x)), 0.5, 1.0, limit=400)[0]
    assert mass == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ValueError):
        lp.fidelity_pdf_transform(wait_pdf, curve, 0.4)


def test_fifo_inf_fidelity_pdf_closed_form():
    curve = q.FidelityCurve(0.5, 0.5, 0.01)
    xs = np.linspace(0.6, 0.999, 40)
    generic = lp.fidelity_pdf_transform(lambda t: lp.fifo_inf_wait_pdf(LAM_R, LAM_E, t), curve, xs)
    assert np.allclose(lp.fifo_inf_fidelity_pdf(LAM_R, LAM_E, curve, xs), generic, rtol=1e-12)


def test_fidelity_histogram_matches_density():
    curve = q.FidelityCurve(0.5, 0.5, 0.2)
    trace = sim.simulate(LAM_R, LAM_E, None, 0, sim.PolicySpec.from_names("fifo", "fifo-po"), 200_000, 33)
    f = curve(sim.wait_samples(trace, "request"))[::5]
    edges = np.linspace(0.5, 1.0, 11)
    dens = lambda x: float(lp.fifo_inf_fidelity_pdf(LAM_R, LAM_E, curve, x))
    probs = np.array([integrate.quad(dens, a, b)[0] for a, b in zip(edges[:-1], edges[1:])])
    observed = np.histogram(f, bins=edges)[0]
    assert stats.chisquare(observed, probs / probs.sum() * observed.sum()).pvalue > 0.01


# ---- phase mixture ----

GAMMA = 0.01
P = q.DephasingParams(GAMMA)
CR, CE = q.curve_request(q.PLUS, P), q.curve_epr(q.PLUS, P)


def test_mixture_symmetric_reduces_to_single_phase():
    c = mk.DoubleQueueConfig(3.0, 3.0, 6, 6)
    curve = q.FidelityCurve(0.5, 0.5, 0.1)
    single = q.expected_fidelity(curve, lp.lifo_po_laplace(6, 3.0, 3.0).conditioned())
    assert lp.phase_conditioned_mean(c, "lifo-po", "lifo-po", curve, curve) == pytest.approx(single, abs=1e-14)


def test_mixture_without_decoherence_is_one():
    p0 = q.DephasingParams(0.0)
    c = mk.DoubleQueueConfig(LAM_E, LAM_R, 10, 10)
    assert lp.phase_conditioned_mean(c, "fifo-po", "lifo-po", q.curve_request(q.PLUS, p0), q.curve_epr(q.PLUS, p0)) == 1.0


def test_mixture_weights_sum_to_one_and_use_match_rates():
    c = mk.DoubleQueueConfig(LAM_E, LAM_R, 10, 10)
    ph = lp.solve_phases(c, "lifo-po", "lifo-po")
    assert ph.weight_r + ph.weight_e == pytest.approx(1.0)
    pi = mk.stationary_distribution(c)
    # request-waited matches happen when an EPR arrives to a request surplus
    assert ph.rate_r == pytest.approx(LAM_E * pi.mass(1, 10), rel=1e-9)
    assert ph.rate_e == pytest.approx(LAM_R * pi.mass(-10, -1), rel=1e-9)


def test_mixture_reference_values():
    c = mk.DoubleQueueConfig(LAM_E, LAM_R, 10, 10)
    assert lp.phase_conditioned_mean(c, "lifo-po", "lifo-po", CR, CE) == pytest.approx(0.997397, abs=1e-6)
    assert lp.phase_conditioned_mean(c, "fifo-po", "fifo-po", CR, CE) == pytest.approx(0.988327, abs=1e-6)


def test_mixture_matches_simulation_point():
    c = mk.DoubleQueueConfig(LAM_E, LAM_R, 10, 10)
    trace = sim.run(c, sim.PolicySpec.from_names("lifo-po", "lifo-po"), 10**6, 2)
    mean, err = sim.estimate_mean_fidelity(trace, CR, CE)
    analytic = lp.phase_conditioned_mean(c, "lifo-po", "lifo-po", CR, CE)
    assert abs(mean - analytic) <= 0.005
    assert abs(mean - analytic) <= 3 * err


def test_mixture_pdf_integrates_to_one_and_mean_matches():
    # a faster decay spreads the two phase ranges enough for quadrature
    p = q.DephasingParams(0.5)
    cr, ce = q.curve_request(q.PLUS, p), q.curve_epr(q.PLUS, p)
    c = mk.DoubleQueueConfig(LAM_E, 4.0, 5, 5)
    pdf = lambda x: float(lp.phase_conditioned_pdf(c, "lifo-po", "fifo-po", cr, ce, np.array([x]))[0])
    pts = [cr.limit, ce.limit, 1.0]
    mass = sum(integrate.quad(pdf, a, b, limit=400)[0] for a, b in zip(pts[:-1], pts[1:]))
    mean = sum(integrate.quad(lambda x: x * pdf(x), a, b, limit=400)[0] for a, b in zip(pts[:-1], pts[1:]))
    assert mass == pytest.approx(1.0, abs=1e-6)
    assert mean == pytest.approx(lp.phase_conditioned_mean(c, "lifo-po", "fifo-po", cr, ce), abs=1e-6)


def test_mixture_histogram_matches_pdf():
    p = q.DephasingParams(0.5)
    cr, ce = q.curve_request(q.PLUS, p), q.curve_epr(q.PLUS, p)
    c = mk.DoubleQueueConfig(LAM_E, 4.0, 5, 5)
    trace = sim.run(c, sim.PolicySpec.from_names("lifo-po", "fifo-po"), 400_000, 17)
    f = sim.match_fidelities(trace, cr, ce)
    f = f[int(len(f) * 0.05)::5]
    edges = np.array([0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 1.0])
    pdf = lambda x: float(lp.phase_conditioned_pdf(c, "lifo-po", "fifo-po", cr, ce, np.array([x]))[0])
    probs = []
    for a, b in zip(edges[:-1], edges[1:]):
        cuts = sorted({a, b} | {v for v in (2 / 3,) if a < v < b})
        probs.append(sum(integrate.quad(pdf, u, v, limit=200)[0] for u, v in zip(cuts[:-1], cuts[1:])))
    probs = np.array(probs)
    observed = np.histogram(f, bins=edges)[0]
    assert stats.chisquare(observed, probs / probs.sum() * observed.sum()).pvalue > 0.01


def test_mixture_handles_unbounded_side():
    c = mk.DoubleQueueConfig(LAM_E, LAM_R, 10, None)
    v = lp.phase_conditioned_mean(c, "fifo", "lifo-po", CR, CE)
    assert 0.5 < v < 1
    with pytest.raises(lp.StabilityError):
        lp.phase_conditioned_mean(mk.DoubleQueueConfig(LAM_E, 6.0, 10, None), "fifo", "lifo-po", CR, CE)
