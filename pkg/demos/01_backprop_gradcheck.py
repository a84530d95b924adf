"""Train a tiny regression net by hand and check its gradients numerically."""
import numpy as np

from aae_emotion import Adam, Network, gradient_check
from aae_emotion.nn import apply_update, mse_loss

rng = np.random.default_rng(0)

# y = sin(x0) + 0.5 * x1, a smooth target a 2-16-1 tanh net can fit
x = rng.uniform(-2, 2, (256, 2))
y = (np.sin(x[:, 0]) + 0.5 * x[:, 1])[:, None]

net = Network.build([2, 16, 1], ["tanh", "identity"], rng=rng)
print("max relative gradient error before training:", f"{gradient_check(net, 'mse', x[:8], y[:8]):.2e}")

opt = Adam(learning_rate=1e-2)
for step in range(501):
    out, cache = net.forward(x, mode="train", rng=rng)
    loss, dout = mse_loss(out, y)
    apply_update([net], [net.backward(cache, dout)], opt)
    if step % 100 == 0:
        print(f"step {step:3d}  mse {loss:.4f}")

# a deliberately broken backward pass is caught by the same check
print("corrupted backward pass error:", f"{gradient_check(net, 'mse', x[:8], y[:8], corrupt=True):.2e}")
