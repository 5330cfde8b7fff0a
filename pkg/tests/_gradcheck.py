"""Finite-difference check of a whole model under the MML objective."""
import numpy as np

from rimml.dataset import NormStats
from rimml.model import MMLConfig, Model, ModelConfig, mml_loss

TOY = ModelConfig(arch="ri_cnn", bins=17, conv_layers=2, filters_per_layer=4, filter_len=5,
                  dense_layers=1, dense_width=8)


def toy_problem(seed=7, batch=4):
    rng = np.random.default_rng(seed)
    d = TOY.output_dim
    tgt = NormStats(rng.uniform(-0.2, 0.2, d), rng.uniform(0.5, 1.5, d))
    model = Model(TOY, seed=seed, dtype=np.float64, input_stats=NormStats(np.zeros(TOY.input_dim), np.ones(TOY.input_dim)),
                  target_stats=tgt)
    x = rng.standard_normal((batch, TOY.input_dim))
    y = rng.standard_normal((batch, d))
    return model, x, y


def network_gradcheck(alpha, beta, seed=7, h=1e-6):
    """Worst relative error between backprop and central differences over all parameters."""
    model, x, y = toy_problem(seed)
    cfg = MMLConfig(alpha=alpha, beta=beta)

    def f():
        return mml_loss(model.forward(x, train=True), y, cfg)[0]

    loss, g = mml_loss(model.forward(x, train=True), y, cfg)
    model.backward(g)
    worst = 0.0
    for (name, p), analytic in zip(model.named_parameters(), model.gradients()):
        analytic = analytic.copy()
        num = np.zeros_like(p)
        for i in np.ndindex(p.shape):
            old = p[i]
            p[i] = old + h
            fp = f()
            p[i] = old - h
            fm = f()
            p[i] = old
            num[i] = (fp - fm) / (2 * h)
        scale = max(np.max(np.abs(num)), np.max(np.abs(analytic)), 1e-8)
        worst = max(worst, float(np.max(np.abs(num - analytic)) / scale))
    return worst
