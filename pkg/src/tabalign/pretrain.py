"""Self-supervised pretraining loop.

Each step samples one separation mask for the batch, splits rows into
feature/target views, pairs every row with its nearest neighbor in target
space, and pulls the paired feature-view projections together under the
contrastive alignment loss. An ensemble trains one independent stack per
separation ratio.
"""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import TrainingError
from .nncore import (
    AdamState,
    DenseLayer,
    adam_step,
    infonce_loss,
    init_layer,
    mlp_backward,
    mlp_forward,
)
from .preprocess import Preprocessor, make_views, make_views_marginal, sample_mask

RATIO_RANDOM = "random"
DEFAULT_RATIOS = (0.1, 0.2, 0.3, 0.4, 0.5)


@dataclass
class PretrainConfig:
    """Training hyperparameters; defaults follow the standard recipe."""

    max_epochs: int = 10000
    batch_size: int = 1024
    learning_rate: float = 0.001
    patience: int = 100
    hidden_dim: int = 1024
    embed_dim: int = 256
    projector_dim: int = 256
    temperature: float = 0.1
    conditioned: bool = True
    imputation: str = "zero"
    ratio_choices: tuple[float, ...] = DEFAULT_RATIOS
    dtype: str = "float64"

    def numpy_dtype(self) -> np.dtype:
        return np.float32 if self.dtype == "float32" else np.float64


@dataclass
class EncoderStack:
    """Encoder + conditioned projector with one shared Adam state.

    The projector input is the encoder output concatenated with the encoded
    mask vector (width ``embed_dim + encoded_dim``) unless conditioning is
    disabled.
    """

    encoder: list[DenseLayer]
    projector: list[DenseLayer]
    adam: AdamState
    ratio: float | str
    seed: int
    conditioned: bool
    encoded_dim: int
    cfg: PretrainConfig = field(default_factory=PretrainConfig)

    @property
    def embed_dim(self) -> int:
        return self.encoder[-1].out_dim

    def parameters(self) -> list[np.ndarray]:
        """All trainable tensors in checkpoint order."""
        out: list[np.ndarray] = []
        for layer in self.encoder + self.projector:
            out.extend([layer.weight, layer.bias])
        return out

    def gradients(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for layer in self.encoder + self.projector:
            out.extend([layer.grad_weight, layer.grad_bias])
        return out

    def clone(self) -> "EncoderStack":
        return copy.deepcopy(self)


@dataclass
class PretrainReport:
    """Per-epoch loss curves and the stopping summary of one training run."""

    train_losses: list[float]
    valid_losses: list[float]
    stopped_epoch: int
    best_epoch: int
    best_validation_loss: float
    wall_seconds: float


def init_stack(
    encoded_dim: int,
    ratio: float | str,
    seed: int,
    cfg: PretrainConfig | None = None,
) -> EncoderStack:
    """Build a freshly initialized stack with its own seeded parameter draw."""
    cfg = cfg or PretrainConfig()
    if ratio != RATIO_RANDOM and not 0.0 < float(ratio) < 1.0:
        raise TrainingError(f"separation ratio must be in (0, 1) or 'random', got {ratio}")
    dtype = cfg.numpy_dtype()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0])))
    encoder = [
        init_layer(encoded_dim, cfg.hidden_dim, rng, dtype),
        init_layer(cfg.hidden_dim, cfg.embed_dim, rng, dtype),
    ]
    proj_in = cfg.embed_dim + (encoded_dim if cfg.conditioned else 0)
    projector = [
        init_layer(proj_in, cfg.hidden_dim, rng, dtype),
        init_layer(cfg.hidden_dim, cfg.projector_dim, rng, dtype),
    ]
    stack = EncoderStack(
        encoder=encoder,
        projector=projector,
        adam=AdamState.for_params([], lr=cfg.learning_rate),
        ratio=ratio,
        seed=seed,
        conditioned=cfg.conditioned,
        encoded_dim=encoded_dim,
        cfg=cfg,
    )
    stack.adam = AdamState.for_params(stack.parameters(), lr=cfg.learning_rate)
    return stack


def target_nearest_neighbor(t: np.ndarray, i: int) -> int:
    """Index of the row closest to row i in Euclidean distance, self excluded.

    Ties break to the smallest index.
    """
    t = np.asarray(t)
    if t.shape[0] < 2:
        raise TrainingError("nearest-neighbor search needs a batch of >= 2")
    d2 = np.square(t - t[i]).sum(axis=1)
    d2[i] = np.inf
    return int(np.argmin(d2))


def nearest_neighbor_indices(t: np.ndarray) -> np.ndarray:
    """Nearest neighbor of every row (O(B^2) exact scan, ties to smallest index)."""
    t = np.asarray(t)
    b = t.shape[0]
    if b < 2:
        raise TrainingError("nearest-neighbor search needs a batch of >= 2")
    out = np.empty(b, dtype=np.int64)
    for i in range(b):
        d2 = np.square(t - t[i]).sum(axis=1)
        d2[i] = np.inf
        out[i] = np.argmin(d2)
    return out


def _batch_views(
    stack: EncoderStack,
    batch: np.ndarray,
    pp: Preprocessor,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sample this batch's mask and build both views under the imputation policy."""
    ratio = stack.ratio
    if ratio == RATIO_RANDOM:
        ratio = float(rng.choice(stack.cfg.ratio_choices))
    mask = sample_mask(pp, float(ratio), rng)
    if stack.cfg.imputation == "marginal":
        x_f, x_t = make_views_marginal(batch, mask, pp, rng)
    else:
        x_f, x_t = make_views(batch, mask)
    return x_f, x_t, mask.encoded_mask


def composite_loss(
    stack: EncoderStack,
    x_f: np.ndarray,
    mask_vec: np.ndarray,
    pos: np.ndarray,
    with_grads: bool = False,
) -> float:
    """Contrastive loss of encoder -> conditioned projector on fixed views.

    ``pos`` names each row's positive partner. With ``with_grads`` the full
    analytic parameter gradient lands in the layers' buffers.
    """
    dtype = stack.cfg.numpy_dtype()
    h, enc_cache = mlp_forward(stack.encoder, np.asarray(x_f, dtype=dtype))
    if stack.conditioned:
        cond = np.broadcast_to(mask_vec.astype(dtype), (h.shape[0], mask_vec.shape[0]))
        proj_in = np.concatenate([h, cond], axis=1)
    else:
        proj_in = h
    z, proj_cache = mlp_forward(stack.projector, proj_in)
    loss, d_z = infonce_loss(z, pos, stack.cfg.temperature)
    if with_grads:
        d_proj_in = mlp_backward(stack.projector, proj_cache, d_z.astype(dtype, copy=False))
        d_h = d_proj_in[:, : stack.embed_dim] if stack.conditioned else d_proj_in
        mlp_backward(stack.encoder, enc_cache, d_h)
    return loss


def alignment_loss(
    stack: EncoderStack,
    batch: np.ndarray,
    pp: Preprocessor,
    rng: np.random.Generator,
    with_grads: bool = False,
) -> float:
    """One alignment step on a batch: sample a mask, build views, pair rows
    by target-view nearest neighbors, and score the contrastive loss."""
    batch = np.asarray(batch, dtype=stack.cfg.numpy_dtype())
    x_f, x_t, mask_vec = _batch_views(stack, batch, pp, rng)
    pos = nearest_neighbor_indices(x_t)
    return composite_loss(stack, x_f, mask_vec, pos, with_grads=with_grads)


def train_step(
    stack: EncoderStack,
    batch: np.ndarray,
    pp: Preprocessor,
    rng: np.random.Generator,
) -> float:
    """One optimization step on a batch; returns the batch loss."""
    loss = alignment_loss(stack, batch, pp, rng, with_grads=True)
    if not np.isfinite(loss):
        raise TrainingError(
            f"non-finite training loss (ratio={stack.ratio}, batch of {len(batch)})"
        )
    adam_step(stack.parameters(), stack.gradients(), stack.adam)
    return loss


def _epoch_batches(n: int, batch_size: int, order: np.ndarray):
    """Yield index slices of <= batch_size; a trailing batch of 1 is skipped."""
    for start in range(0, n, batch_size):
        rows = order[start : start + batch_size]
        if len(rows) >= 2:
            yield rows


def pretrain(
    stack: EncoderStack,
    train: np.ndarray,
    valid: np.ndarray,
    pp: Preprocessor,
    cfg: PretrainConfig | None = None,
) -> PretrainReport:
    """Train one stack with validation-loss early stopping.

    Each epoch is one shuffled pass over the training rows in batches of at
    most ``batch_size``. Validation loss is measured with freshly sampled
    masks under the same ratio policy. Training stops after ``patience``
    epochs without improvement (patience 0 behaves as 1) and the parameters
    from the best-validation epoch are restored.
    """
    cfg = cfg or stack.cfg
    stack.cfg = cfg
    if len(valid) == 0:
        raise TrainingError("validation set is empty")
    if len(train) < 2:
        raise TrainingError("training set needs at least 2 rows")

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([stack.seed, 1])))
    patience = max(1, cfg.patience)
    best_loss = np.inf
    best_epoch = 0
    best_params: list[np.ndarray] | None = None
    since_improved = 0
    train_curve: list[float] = []
    valid_curve: list[float] = []
    started = time.perf_counter()

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train))
        total = 0.0
        count = 0
        for rows in _epoch_batches(len(train), cfg.batch_size, order):
            loss = train_step(stack, train[rows], pp, rng)
            total += loss * len(rows)
            count += len(rows)
        train_curve.append(total / count)

        vtotal = 0.0
        vcount = 0
        for rows in _epoch_batches(len(valid), cfg.batch_size, np.arange(len(valid))):
            vloss = alignment_loss(stack, valid[rows], pp, rng)
            vtotal += vloss * len(rows)
            vcount += len(rows)
        if vcount == 0:
            raise TrainingError("validation set has no batch of >= 2 rows")
        vloss_epoch = vtotal / vcount
        if not np.isfinite(vloss_epoch):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        valid_curve.append(vloss_epoch)

        if vloss_epoch < best_loss:
            best_loss = vloss_epoch
            best_epoch = epoch
            best_params = [p.copy() for p in stack.parameters()]
            since_improved = 0
        else:
            since_improved += 1
            if since_improved >= patience:
                break

    if best_params is not None:
        for p, b in zip(stack.parameters(), best_params):
            p[...] = b
    return PretrainReport(
        train_losses=train_curve,
        valid_losses=valid_curve,
        stopped_epoch=len(train_curve),
        best_epoch=best_epoch,
        best_validation_loss=float(best_loss),
        wall_seconds=time.perf_counter() - started,
    )


def member_seed(master_seed: int, index: int) -> int:
    """Derived seed for ensemble member ``index``; stable across runs."""
    ss = np.random.SeedSequence([master_seed, index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def pretrain_ensemble(
    train: np.ndarray,
    valid: np.ndarray,
    pp: Preprocessor,
    ratios: list[float | str],
    cfg: PretrainConfig,
    master_seed: int,
) -> tuple[list[EncoderStack], list[PretrainReport]]:
    """Train one independently initialized stack per separation ratio.

    Member k's randomness derives solely from (master_seed, k), so retraining
    one member can never perturb another.
    """
    if not ratios:
        raise TrainingError("ensemble needs at least one separation ratio")
    stacks: list[EncoderStack] = []
    reports: list[PretrainReport] = []
    for k, ratio in enumerate(ratios):
        stack = init_stack(train.shape[1], ratio, member_seed(master_seed, k), cfg)
        reports.append(pretrain(stack, train, valid, pp, cfg))
        stacks.append(stack)
    return stacks, reports
