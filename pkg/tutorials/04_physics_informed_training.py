"""Train the operator from the physics alone and use it as a surrogate.

No solver output enters training: the loss is the mean squared residual of
the governing equation plus boundary and initial-condition penalties.  The
reference solver is used afterwards only to measure the error and to give
the Monte Carlo benchmark.  With the settings below (41 x 41 grid, 100
inputs, 100 epochs) a single CPU needs roughly 15 to 30 minutes; lower
``EPOCHS`` for a quick look.
"""
import numpy as np
import torch

from piwno.problems import make_problem
from piwno.reliability import peak_response
from piwno.training import TrainConfig, predict, relative_l2, train_pio

EPOCHS = 100

torch.manual_seed(0)
problem = make_problem("diffusion_reaction", resolution=41, probe_x=21 / 40)
train = problem.sample(0, 100)
result = train_pio(problem.wno_config(), problem.encode(train["raw"]), TrainConfig(epochs=EPOCHS, batch_size=20),
                   problem.physics, problem.grid, physics_inputs=train["raw"],
                   callback=lambda row: print(f"epoch {row['epoch']:3d}  loss {row['loss']:.3e}"))

hold = problem.sample(1, 50)
err = relative_l2(predict(result.model, problem.encode(hold["raw"])), problem.solve(hold["raw"]), reduce=False)
print(f"held-out relative L2: median {np.median(err):.3%}, max {err.max():.3%}")

mcs = problem.sample(2, 2000)
ls = problem.limit_state()
pf_solver = np.mean(peak_response(problem.solve(mcs["raw"]), ls) > ls.e_h)
pf_surrogate = np.mean(peak_response(predict(result.model, problem.encode(mcs["raw"])), ls) > ls.e_h)
print(f"P_f solver {pf_solver:.4f}, surrogate {pf_surrogate:.4f}")
