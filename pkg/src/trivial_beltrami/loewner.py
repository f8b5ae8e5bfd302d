"""Inverse Loewner chains driven by Herglotz families q = (1 + psi) / (1 - psi).

The chain solves ``d/dt w(z, t) = -z w'(z, t) q(z, t)`` with ``w(z, 0) = z``.
It is constant along the characteristics ``d zeta/ds = zeta q(zeta, s)``, so
``w(z, t)`` is obtained by integrating a characteristic backward from
``zeta(t) = z`` down to ``s = 0``.

The integration runs in the logarithmic variable ``lam = log zeta``, where the
equation reads ``d lam/ds = q(exp(lam), s)``: tolerances then control the
relative error of ``zeta`` and constant ``q`` is integrated exactly.

Many characteristics are advanced in lockstep with numpy. Each one keeps its
own time, step size and controller state, so a point's result does not
depend on which other points share its batch.
"""
from __future__ import annotations

import csv
import io
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import integrate

from .analytic_expr import DISK_TOL, Breakpoint
from .beltrami import BeltramiSpec, DilationForm, SumForm
from .errors import DomainError, EscapeError, InvariantViolation, StepFailure

# Dormand-Prince 5(4)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array(_A[6] + [0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

# PI step-size controller gains
_ALPHA = 0.7 / 5
_BETA = 0.4 / 5
_SAFETY = 0.9
_FAC_MIN, _FAC_MAX = 0.2, 10.0

OK, FAILED, ESCAPED = 0, 1, 2


def _combine(weights, ks):
    # elementwise in a fixed order: a BLAS contraction may sum differently
    # depending on the batch size, which would couple points in a batch
    out = np.zeros(ks.shape[1:], dtype=complex)
    for w, k in zip(weights, ks):
        if w:
            out = out + w * k
    return out


def env_threads() -> int:
    try:
        return max(1, int(os.environ.get("TB_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class HerglotzFamily:
    """q(z, t) = (1 + psi_t(z)) / (1 - psi_t(z)) together with its breakpoints."""

    family: SumForm | DilationForm
    k: float
    breakpoints: tuple[Breakpoint, ...]
    edges: np.ndarray = field(repr=False)  # 0 = e_0 < e_1 < ... ; interval i = [e_i, e_{i+1})
    oscillatory_origin: bool
    piece_map: np.ndarray = field(repr=False)

    @classmethod
    def from_spec(cls, spec: BeltramiSpec | SumForm | DilationForm) -> "HerglotzFamily":
        fam = spec.family if isinstance(spec, BeltramiSpec) else spec
        bps = tuple(fam.breakpoints())
        edges = np.array([0.0] + [b.t for b in bps if b.t > 0])
        osc = any(b.t == 0 and b.oscillatory for b in bps)
        return cls(fam, fam.k, bps, edges, osc, fam.piece_map(edges))

    def interval_of(self, t):
        return np.searchsorted(self.edges, np.asarray(t, dtype=float), side="right") - 1

    def psi(self, z, t):
        return self.family.psi(z, t)

    def psi_on_interval(self, z, t, iv):
        pm = self.piece_map[:, np.asarray(iv)] if self.piece_map.size else self.piece_map
        return self.family.psi_on_pieces(z, t, pm)

    def q(self, z, t):
        p = self.psi(z, t)
        return (1 + p) / (1 - p)

    def q_on_interval(self, z, t, iv):
        p = self.psi_on_interval(z, t, iv)
        return (1 + p) / (1 - p)

    def interior_breakpoints(self) -> list[float]:
        return [float(e) for e in self.edges[1:]]


def q_at(fam: HerglotzFamily, z, t):
    za = np.asarray(z, dtype=complex)
    if np.any(np.abs(za) > 1 + DISK_TOL):
        raise DomainError("q is evaluated on the closed unit disk")
    q = fam.q(za, t)
    if np.any(q.real <= 0):
        raise InvariantViolation("Re q <= 0: the family is not Herglotz")
    return complex(q) if np.ndim(q) == 0 else q


class FlowResult(NamedTuple):
    zeta: np.ndarray
    status: np.ndarray
    worst_error: np.ndarray
    steps: np.ndarray
    degraded: np.ndarray
    nodes: list | None


@dataclass(frozen=True)
class ChainEvaluator:
    family: HerglotzFamily
    rtol: float = 1e-10
    atol: float = 1e-12
    max_step: float = math.inf
    osc_cap: float = 0.125  # step <= osc_cap * s inside an oscillatory first interval
    osc_floor: float = 1e-12  # below this time the last step to 0 is taken unchecked
    start_radius: float = 1.0
    max_steps: int = 200_000
    threads: int = 0  # 0 -> TB_THREADS

    @classmethod
    def from_spec(cls, spec, **kw) -> "ChainEvaluator":
        return cls(HerglotzFamily.from_spec(spec), **kw)

    def with_tolerances(self, rtol: float, atol: float) -> "ChainEvaluator":
        return ChainEvaluator(
            self.family, rtol, atol, self.max_step, self.osc_cap, self.osc_floor,
            self.start_radius, self.max_steps, self.threads,
        )

    # -- core -------------------------------------------------------------

    def flow(self, z, t_from, t_to=0.0, record: bool = False) -> FlowResult:
        """Integrate characteristics backward from (z, t_from) to time t_to.

        Arrays broadcast against each other. Failures are reported through
        ``status`` rather than raised.
        """
        z, t_from, t_to = np.broadcast_arrays(
            np.asarray(z, dtype=complex), np.asarray(t_from, dtype=float), np.asarray(t_to, dtype=float)
        )
        shape = z.shape
        z, t_from, t_to = z.ravel(), t_from.ravel(), t_to.ravel()
        if np.any(t_to < 0) or np.any(t_from < t_to) or not np.all(np.isfinite(t_from)):
            raise DomainError("need 0 <= t_to <= t_from < inf")
        if np.any(z == 0):
            raise DomainError("characteristics start away from the origin")
        nthreads = self.threads or env_threads()
        n = z.size
        if nthreads > 1 and n >= 64 and not record:
            chunks = np.array_split(np.arange(n), nthreads)
            with ThreadPoolExecutor(nthreads) as pool:
                parts = list(pool.map(lambda ix: self._flow(z[ix], t_from[ix], t_to[ix], False), chunks))
            res = FlowResult(*(np.concatenate([p[i] for p in parts]) for i in range(5)), None)
        else:
            res = self._flow(z, t_from, t_to, record)
        return FlowResult(
            res.zeta.reshape(shape), res.status.reshape(shape), res.worst_error.reshape(shape),
            res.steps.reshape(shape), res.degraded.reshape(shape), res.nodes,
        )

    def _stage_eval(self, lam, s, iv):
        return self.family.q_on_interval(np.exp(lam), s, iv)

    def _flow(self, z, t_from, t_to, record):
        fam = self.family
        n = z.size
        lam = np.log(z)
        s = t_from.copy()
        iv = np.maximum(fam.interval_of(s), 0)
        # a start exactly on an edge belongs to the interval below it
        on_edge = (iv > 0) & (fam.edges[iv] == s)
        iv[on_edge] -= 1
        h = np.minimum(0.01, np.maximum(s - t_to, 0.0))
        h = np.where(h > 0, h, 0.01)
        h = np.minimum(h, self.max_step)
        err_prev = np.full(n, 1e-4)
        rejected_last = np.zeros(n, dtype=bool)
        status = np.zeros(n, dtype=np.int8)
        worst = np.zeros(n)
        steps = np.zeros(n, dtype=np.int64)
        degraded = np.zeros(n, dtype=bool)
        k1 = np.full(n, np.nan + 0j)
        done = s <= t_to
        escape_re = math.log1p(10 * max(self.rtol, self.atol))
        scale = self.atol + self.rtol
        log_rho = math.log(self.start_radius)
        if self.start_radius != 1.0:
            lam = lam + log_rho
        rec_ids, rec_s, rec_lam, rec_h = [], [], [], []
        if record:
            rec_ids.append(np.arange(n)); rec_s.append(s.copy()); rec_lam.append(lam.copy()); rec_h.append(np.zeros(n))
        osc = fam.oscillatory_origin

        while True:
            act = np.flatnonzero(~done)
            if act.size == 0:
                break
            sa, la, ia, ha = s[act], lam[act], iv[act], h[act]
            lower = np.maximum(fam.edges[ia], t_to[act])
            span = sa - lower
            hh = np.minimum(ha, self.max_step)
            unchecked = np.zeros(act.size, dtype=bool)
            if osc:
                in_osc = (ia == 0)
                hh = np.where(in_osc, np.minimum(hh, self.osc_cap * sa), hh)
                final = in_osc & (lower == 0) & (sa <= self.osc_floor)
                hh = np.where(final, span, hh)
                unchecked = final
            land = hh >= span * (1 - 1e-12)
            hh = np.where(land, span, hh)

            ks = np.empty((7, act.size), dtype=complex)
            k1a = k1[act]
            need = np.isnan(k1a.real)
            if np.any(need):
                k1a = k1a.copy()
                k1a[need] = self._stage_eval(la[need], sa[need], ia[need])
            ks[0] = k1a
            dh = -hh
            for i in range(1, 7):
                acc = np.zeros(act.size, dtype=complex)
                for j, a in enumerate(_A[i]):
                    if a:
                        acc = acc + a * ks[j]
                ks[i] = self._stage_eval(la + dh * acc, sa - _C[i] * hh, ia)
            lam_new = la + dh * _combine(_B5, ks)
            errv = np.abs(dh * _combine(_E, ks)) / scale
            errv = np.where(np.isfinite(errv), errv, np.inf)

            accept = (errv <= 1.0) | unchecked
            degraded[act[unchecked]] = True
            # controller
            with np.errstate(divide="ignore"):
                fac_acc = _SAFETY * np.maximum(errv, 1e-300) ** -_ALPHA * err_prev[act] ** _BETA
                fac_rej = _SAFETY * np.maximum(errv, 1e-300) ** -0.2
            fac_acc = np.clip(fac_acc, _FAC_MIN, _FAC_MAX)
            fac_acc = np.where(rejected_last[act], np.minimum(fac_acc, 1.0), fac_acc)
            fac_rej = np.clip(fac_rej, _FAC_MIN, 1.0)

            acc_ix = act[accept]
            rej_ix = act[~accept]
            # rejected steps
            if rej_ix.size:
                hr = hh[~accept] * fac_rej[~accept]
                h[rej_ix] = hr
                rejected_last[rej_ix] = True
                tiny = hr < 1e-14 * np.maximum(1.0, s[rej_ix])
                status[rej_ix[tiny]] = FAILED
                fe = errv[~accept][tiny]
                worst[rej_ix[tiny]] = np.where(np.isfinite(fe), fe * scale, np.inf)
                done[rej_ix[tiny]] = True
                k1[rej_ix] = ks[0][~accept]
            if acc_ix.size:
                am = accept
                s_new = np.where(land[am], lower[am], sa[am] - hh[am])
                lam[acc_ix] = lam_new[am]
                s[acc_ix] = s_new
                steps[acc_ix] += 1
                worst[acc_ix] = np.maximum(worst[acc_ix], np.where(unchecked[am], 0.0, errv[am] * scale))
                err_prev[acc_ix] = np.maximum(errv[am], 1e-4)
                rejected_last[acc_ix] = False
                hn = hh[am] * fac_acc[am]
                # landing on a clipped step must not shrink the next proposal
                hn = np.where(land[am], np.maximum(hn, ha[am]), hn)
                h[acc_ix] = hn
                k1[acc_ix] = ks[6][am]  # FSAL
                crossed = land[am] & (s_new > t_to[acc_ix])
                if np.any(crossed):
                    cx = acc_ix[crossed]
                    iv[cx] -= 1
                    k1[cx] = np.nan
                fin = s_new <= t_to[acc_ix]
                done[acc_ix[fin]] = True
                escaped = lam[acc_ix].real > escape_re
                if np.any(escaped):
                    status[acc_ix[escaped]] = ESCAPED
                    done[acc_ix[escaped]] = True
                bad = ~np.isfinite(lam[acc_ix])
                if np.any(bad):
                    status[acc_ix[bad]] = FAILED
                    done[acc_ix[bad]] = True
                if record:
                    rec_ids.append(acc_ix); rec_s.append(s_new); rec_lam.append(lam_new[am]); rec_h.append(hh[am])
            over = steps >= self.max_steps
            if np.any(over & ~done):
                status[over & ~done] = FAILED
                done |= over

        zeta = np.exp(lam - log_rho) if self.start_radius != 1.0 else np.exp(lam)
        nodes = None
        if record:
            ids = np.concatenate(rec_ids)
            order = np.argsort(ids, kind="stable")
            ids = ids[order]
            ss = np.concatenate(rec_s)[order]
            ll = np.concatenate(rec_lam)[order]
            hs = np.concatenate(rec_h)[order]
            cuts = np.searchsorted(ids, np.arange(n + 1))
            nodes = [(ss[a:b], ll[a:b], hs[a:b]) for a, b in zip(cuts[:-1], cuts[1:])]
        return FlowResult(zeta, status, worst, steps, degraded, nodes)

    def replay(self, z, node_seqs) -> np.ndarray:
        """Integrate with a prescribed decreasing node sequence per point.

        Each sequence runs from the start time down to its end time. No error
        control is applied, so the result is a smooth function of the start
        data; this is what finite differences of the chain rely on.
        """
        fam = self.family
        z = np.asarray(z, dtype=complex).ravel()
        n = z.size
        lengths = np.array([len(sq) for sq in node_seqs])
        width = int(lengths.max()) if n else 0
        S = np.full((n, width), np.nan)
        for i, sq in enumerate(node_seqs):
            S[i, : len(sq)] = sq
        lam = np.log(z)
        if self.start_radius != 1.0:
            lam = lam + math.log(self.start_radius)
        for j in range(width - 1):
            act = np.flatnonzero(lengths > j + 1)
            if act.size == 0:
                break
            s0 = S[act, j]
            s1 = S[act, j + 1]
            hh = s0 - s1
            ia = np.maximum(fam.interval_of(0.5 * (s0 + s1)), 0)
            la = lam[act]
            ks = np.empty((7, act.size), dtype=complex)
            ks[0] = self._stage_eval(la, s0, ia)
            for i in range(1, 6):
                acc = np.zeros(act.size, dtype=complex)
                for jj, a in enumerate(_A[i]):
                    if a:
                        acc = acc + a * ks[jj]
                ks[i] = self._stage_eval(la - hh * acc, s0 - _C[i] * hh, ia)
            lam[act] = la - hh * _combine(_B5[:6], ks)
        if self.start_radius != 1.0:
            lam = lam - math.log(self.start_radius)
        return np.exp(lam)

    def trajectory_csv(self, z: complex, t: float) -> str:
        """Debug dump of one backward characteristic: s, re_zeta, im_zeta, step_size."""
        res = self.flow(np.array([z]), np.array([t]), 0.0, record=True)
        ss, ll, hs = res.nodes[0]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", "re_zeta", "im_zeta", "step_size"])
        for s_, l_, h_ in zip(ss, ll, hs):
            zz = complex(np.exp(l_))
            w.writerow([repr(float(s_)), repr(zz.real), repr(zz.imag), repr(float(h_))])
        return buf.getvalue()


def _raise_on_status(res: FlowResult):
    if np.any(res.status == ESCAPED):
        raise EscapeError("a backward characteristic left the closed unit disk")
    if np.any(res.status == FAILED):
        raise StepFailure(
            "adaptive integrator could not meet tolerance",
            worst_error=float(np.max(res.worst_error[res.status == FAILED])),
        )


def omega(ev: ChainEvaluator, z, t):
    """Value of the inverse Loewner chain w_t(z) for 0 < |z| <= 1."""
    za = np.asarray(z, dtype=complex)
    ta = np.asarray(t, dtype=float)
    r = np.abs(za)
    if np.any(r == 0) or np.any(r > 1 + DISK_TOL):
        raise DomainError("omega needs 0 < |z| <= 1")
    if np.any(ta < 0) or not np.all(np.isfinite(ta)):
        raise DomainError("omega needs a finite t >= 0")
    res = ev.flow(za, ta, 0.0)
    _raise_on_status(res)
    out = np.where(np.broadcast_to(ta, res.zeta.shape) == 0, np.broadcast_to(za, res.zeta.shape), res.zeta)
    return complex(out) if out.ndim == 0 else out


class QuadResult(NamedTuple):
    value: complex
    abserr: float


def _integral_q0(fam: HerglotzFamily, lo: float, hi: float, epsabs: float, epsrel: float) -> tuple[complex, float]:
    """integral_lo^hi q(0, s) ds, split at breakpoints."""
    total = 0j
    err = 0.0
    edges = list(fam.edges) + [math.inf]
    for i in range(len(edges) - 1):
        a, b = max(edges[i], lo), min(edges[i + 1], hi)
        if b <= a:
            continue
        if i == 0 and fam.oscillatory_origin:
            # s = e^u removes the log-oscillation at s = 0
            def f(u, part, i=i):
                s = math.exp(u)
                v = complex(fam.q_on_interval(0j, s, i)) * s
                return v.real if part == 0 else v.imag

            lims = (math.log(a) if a > 0 else -math.inf, math.log(b))
        else:
            def f(s, part, i=i):
                v = complex(fam.q_on_interval(0j, s, i))
                return v.real if part == 0 else v.imag

            lims = (a, b)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            re, e1 = integrate.quad(f, *lims, args=(0,), epsabs=epsabs, epsrel=epsrel, limit=400)
            im, e2 = integrate.quad(f, *lims, args=(1,), epsabs=epsabs, epsrel=epsrel, limit=400)
        total += complex(re, im)
        err += e1 + e2
    return total, err


def log_b(fam: HerglotzFamily, t: float, epsabs: float = 1e-13, epsrel: float = 1e-13) -> QuadResult:
    """-integral_0^t q(0, s) ds."""
    if t < 0 or not math.isfinite(t):
        raise DomainError("t must be finite and non-negative")
    total, err = _integral_q0(fam, 0.0, t, epsabs, epsrel)
    return QuadResult(-total, err)


def log_b_many(fam: HerglotzFamily, ts, epsabs: float = 1e-13, epsrel: float = 1e-13) -> tuple[np.ndarray, np.ndarray]:
    """log b at many times, integrating only between consecutive sorted times."""
    ta = np.asarray(ts, dtype=float).ravel()
    if np.any(ta < 0) or not np.all(np.isfinite(ta)):
        raise DomainError("t must be finite and non-negative")
    order = np.argsort(ta, kind="stable")
    vals = np.zeros(ta.size, dtype=complex)
    errs = np.zeros(ta.size)
    acc, acc_err, prev = 0j, 0.0, 0.0
    for j in order:
        if ta[j] > prev:
            seg, e = _integral_q0(fam, prev, float(ta[j]), epsabs, epsrel)
            acc += seg
            acc_err += e
            prev = float(ta[j])
        vals[j], errs[j] = -acc, acc_err
    return vals.reshape(np.shape(ts)), errs.reshape(np.shape(ts))


def omega_prime_zero(ev: ChainEvaluator, t, report_tol: float = 1e-9):
    """b(t) = w_t'(0) = exp(-integral_0^t q(0, s) ds)."""
    vals, errs = log_b_many(ev.family, t)
    if np.any(errs > report_tol):
        warnings.warn(f"quadrature for b(t) reached only {float(np.max(errs)):.2e}", RuntimeWarning, stacklevel=2)
    out = np.exp(vals)
    return complex(out) if np.ndim(out) == 0 else out


def decay_bound(k: float, t):
    """Upper bound exp(-t (1-k)/(1+k)) for |b(t)|."""
    return np.exp(-np.asarray(t) * (1 - k) / (1 + k))
