"""Central finite-difference check of the SAF backward pass."""

from dataclasses import dataclass, field

import numpy as np

from .p2fusion import SafParameters, saf_backward, saf_forward
from .rng import Xoshiro256


@dataclass
class GradcheckReport:
    errors: dict
    tolerance: float
    step: float
    attempts: int = 1
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(e < self.tolerance for e in self.errors.values())

    @property
    def max_error(self):
        return max(self.errors.values()) if self.errors else 0.0

    def to_text(self):
        lines = [f"{name}: {err:.3e}" for name, err in self.errors.items()]
        lines.append(f"max_relative_error: {self.max_error:.3e}")
        lines.append(f"tolerance: {self.tolerance:g}")
        lines.append(f"step: {self.step:g}")
        lines.append(f"result: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def relative_error(numeric, analytic):
    """Largest entry-wise difference, scaled by the tensor's largest gradient magnitude."""
    numeric = np.asarray(numeric, dtype=np.float64)
    analytic = np.asarray(analytic, dtype=np.float64)
    scale = max(np.max(np.abs(numeric), initial=0.0), np.max(np.abs(analytic), initial=0.0), 1e-12)
    return float(np.max(np.abs(numeric - analytic), initial=0.0) / scale)


def numeric_gradient(f, x, step):
    """Central differences of scalar ``f`` with respect to every entry of ``x`` (mutated in place, restored)."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f()
        flat[i] = orig - step
        fm = f()
        flat[i] = orig
        g[i] = (fp - fm) / (2.0 * step)
    return grad


def kink_margin(cache, step):
    """Upper bound on how far one finite-difference step can move any MLP pre-activation.

    Only the first layer is bounded this way; deeper layers get the same
    bound scaled by their input magnitude, which is enough at the default
    depth of one.
    """
    p = cache.params
    k, c = p.k, p.channels
    w0 = np.abs(p.mlp_weights[0])
    # F_IV feeds all K slots, so its entries reach a unit through K weights
    tiled = w0.reshape(k, c, -1).sum(axis=0).max()
    reach = max(1.0, np.max(np.abs(cache.x), initial=0.0), w0.max(), tiled)
    for h in cache.layer_inputs[1:]:
        reach = max(reach, np.max(np.abs(h), initial=0.0))
    return 2.0 * step * reach


def make_case(n, k, c, seed, depth=1, step=1e-3, max_attempts=200):
    """Seeded (F_KIV, F_IV, params, grad_out) whose pre-activations stay clear of the ReLU kink.

    ReLU has no derivative at zero, so a central difference straddling it
    measures a chord, not a gradient. Cases are redrawn from the seeded
    stream until no step of size ``step`` can cross a kink.
    """
    root = Xoshiro256(seed)
    for attempt in range(1, max_attempts + 1):
        rng = root.spawn(attempt)
        params = SafParameters.init(k, c, rng.next_u64(), depth)
        f_kiv = rng.uniform_array((n, k, c), -1.0, 1.0)
        f_iv = rng.uniform_array((n, c), -1.0, 1.0)
        grad_out = rng.uniform_array((n, c), -1.0, 1.0)
        _, cache = saf_forward(f_kiv, f_iv, params)
        if min(np.min(np.abs(z)) for z in cache.pre_acts) > kink_margin(cache, step):
            return f_kiv, f_iv, params, grad_out, attempt
    raise RuntimeError("could not draw a gradient-check case away from ReLU kinks")


def gradcheck(n=16, k=9, c=16, seed=0, step=1e-3, tolerance=1e-4, chunk=None, depth=1, corrupt=None):
    """Compare ``saf_backward`` against central differences for every input and parameter.

    The scalar probed is ``sum(grad_out * F_fusion)`` for a seeded ``grad_out``.
    ``corrupt`` names one gradient to perturb on purpose (negative control).
    """
    f_kiv, f_iv, params, grad_out, attempts = make_case(n, k, c, seed, depth, step)
    _, cache = saf_forward(f_kiv, f_iv, params, chunk=chunk)
    analytic = saf_backward(cache, grad_out)
    if corrupt is not None:
        g = analytic[corrupt]
        g.reshape(-1)[0] += 0.01 * max(np.max(np.abs(g)), 1.0)

    state = {"f_kiv": f_kiv, "f_iv": f_iv, "params": params}

    def loss():
        out, _ = saf_forward(state["f_kiv"], state["f_iv"], state["params"], chunk=chunk, keep_cache=False)
        return float(np.sum(out * grad_out))

    errors = {}
    for name, arr in params.named():
        work = arr.copy()
        state["params"] = params.replace(name, work)
        # replace() keeps a reference to ``work``, so perturbing it in place is seen by loss()
        errors[name] = relative_error(numeric_gradient(loss, work, step), analytic[name])
    state["params"] = params
    errors["F_KIV"] = relative_error(numeric_gradient(loss, state["f_kiv"], step), analytic["F_KIV"])
    errors["F_IV"] = relative_error(numeric_gradient(loss, state["f_iv"], step), analytic["F_IV"])
    return GradcheckReport(errors, tolerance, step, attempts)
