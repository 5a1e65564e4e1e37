//! Config keys listed in each subcommand's `--help`.

pub const CURVE: &str = "\
Config keys:
  spectrum.c, spectrum.omega, spectrum.dim   power-law spectrum (c > 0, omega > 1, dim >= 1)
  d                 output dimension (default 1)
  n, p              grids of sample counts and parameter counts
  model             {\"kind\": \"monolithic\"} or {\"kind\": \"modular\", \"m\": M} (default monolithic)
  form              printed | split: tail trace at p or at p - m*b for modular curves (default printed)
  mc.trials, mc.seed                Monte Carlo settings for F(n, p) near n = p
  simulation.P, simulation.trials, simulation.n_test
                    feature truncation, trials and test points for simulate-linear
                    (defaults 2000, 200, 256)";

pub const GEN_TASK: &str = "\
Config keys (kind = sine):
  k, m              module count and input dimension (m defaults to k)
  tau               sine terms per module (default 3)
  variant           linear | distance (default linear)
  n_train, n_test
Config keys (kind = compositional):
  k                 images per input
  source            {\"kind\": \"toy\", \"train_images\", \"test_images\", \"config\": {side, prototype_seed,
                    noise, brightness}} or {\"kind\": \"cifar\", \"dir\"}
  n_train, n_test
  ood_split         fraction of class combinations held out for testing (optional)
  noise_sigma       Gaussian noise on training inputs (default 0)
  normalize         per-channel normalization (default true)";

pub const INIT_MODULES: &str = "\
Config keys:
  modules           number of projections to learn
  template          {\"kind\": \"sine-linear\", \"sigma\"}, {\"kind\": \"rbf-projection\", \"sigma\", \"width\"}
                    or {\"kind\": \"distance\", \"sigma\"}
  init.iters, init.batch_size, init.lr
  init.jitter       diagonal jitter relative to the kernel diagonal (default 1e-6)
  init.one_output_per_iter          one random target column per step (default true)
  init.log_every    objective logging interval (default 10)";

pub const TRAIN: &str = "\
Config keys:
  network           {\"kind\": \"mlp\", \"sizes\", \"batchnorm\"} or {\"kind\": \"modular\", \"input_dim\",
                    \"modules\", \"projection\", \"body_hidden\", \"body_out\", \"batchnorm\", \"shared\",
                    \"combine\", \"train_projections\"}
  train.loss        mse | block-softmax
  train.lr, train.iterations, train.batch_size
  train.log_every   full-set loss logging interval (default 100)
  train.divergence_threshold        abort once the loss exceeds this (default 1e6)
  kernel            optional {\"template\", \"init\"} as in init-modules, used by --init kernel
                    when no --projections file is given";

pub const EXPERIMENT: &str = "\
Config keys:
  task              {\"kind\": \"sine\", \"dims\", \"m\", \"tau\", \"variant\", \"n_train\", \"n_test\"} or
                    {\"kind\": \"compositional\", \"dims\", \"source\", \"n_train\", \"n_test\", \"ood_split\",
                    \"noise_sigma\", \"normalize\"}
  architecture      list of {\"name\", \"kind\": monolithic | modular, \"width\", \"layers\", \"batchnorm\",
                    \"modules\", \"modules_per_dim\", \"shared\", \"projection_width\", \"body_out\"}
  init.methods      subset of random, kernel, ground-truth (default [random])
  init.sigma, init.iters, init.batch_size, init.lr, init.jitter, init.train_projections
  train.lr, train.iterations, train.batch_size, train.log_every
  train.iterations_by_dim           list of {\"max_dim\", \"iterations\"}
  search            optional {\"eps\", \"c0\", \"max_iters\", \"stop_gap\", \"c_max\"}
                    (defaults 12, 18, 0.3, 22)
  seeds             list of seeds";

pub const FIT: &str = "\
Record fields (CSV columns or JSON keys):
  m                 input dimension
  p_prime           trainable parameter count
  n                 training samples
  d                 output dimension (default 1)
  train, test       observed losses";
