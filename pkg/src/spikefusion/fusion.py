"""Spike-level cross-modal fusion, used only while training.

Three mechanisms produce fused embeddings from the two pre-pool spike
streams:

  scca  comb cross attention: token groups of one modality are summed into
        binary "combs" that multiplicatively mask the other modality
  sca   cross attention over binary Q/K/V with no softmax
  scsa  self attention over the token-concatenated stream, split back

Fused spikes are temporally pooled into soft-label embeddings for the
training objective; the inference path never calls into this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .layers import BatchNorm, Linear, prefixed
from .neurons import LIFNeuron, LIFParams
from .attention import TemporalPool
from .tensor import Tensor, as_tensor, concat, matmul

FUSION_KINDS = ("scca", "sca", "scsa")


@dataclass
class OpCounter:
    """Arithmetic-op ledger for fusion complexity checks."""

    multiplies: int = 0
    additions: int = 0

    def add(self, multiplies: int = 0, additions: int = 0):
        self.multiplies += int(multiplies)
        self.additions += int(additions)


@dataclass(frozen=True)
class FusionConfig:
    kind: str = "scca"
    h: int = 6

    def __post_init__(self):
        if self.kind not in FUSION_KINDS:
            raise ConfigError(
                f"unknown fusion kind {self.kind!r}; expected one of {FUSION_KINDS}"
            )
        if self.kind == "scca" and self.h < 1:
            raise ConfigError(f"comb count must be >= 1, got {self.h}")

    def check_token_counts(self, n_regions: int, n_words: int):
        if self.kind != "scca":
            return
        if n_words % self.h or n_regions % self.h:
            raise ConfigError(
                f"comb count {self.h} must divide both token counts "
                f"({n_words} words, {n_regions} regions)"
            )


def comb_mask(q: Tensor, k: Tensor, h: int, neuron: LIFNeuron,
              counter: OpCounter | None = None) -> Tensor:
    """Comb cross attention: mask ``k`` with combs summarizing ``q``.

    ``q`` (T, B, L, D) is split into ``h`` token groups; each group is summed
    over its tokens and spiked into a comb.  Comb i is duplicated over the
    i-th block of ``k`` (T, B, N, D) and applied as an elementwise binary
    mask.  Cost: one mask multiply per masked element, no attention matrix.
    """
    q, k = as_tensor(q), as_tensor(k)
    t, b, nl, d = q.shape
    nn = k.shape[2]
    if nl % h or nn % h:
        raise ConfigError(
            f"comb count {h} must divide token counts ({nl} and {nn})"
        )
    group = q.reshape((t, b, h, nl // h, d))
    head_sums = group.sum(axis=3)                     # (T, B, h, D)
    combs = neuron(head_sums)                         # binary (T, B, h, D)
    if counter is not None:
        counter.add(multiplies=t * b * nn * d,
                    additions=t * b * (nl - h) * d)
    blocks = k.reshape((t, b, h, nn // h, d))
    masked = combs.reshape((t, b, h, 1, d)) * blocks
    return masked.reshape((t, b, nn, d))


def qkv_attention(q: Tensor, k: Tensor, v: Tensor,
                  counter: OpCounter | None = None) -> Tensor:
    """Spike attention product Q K^T V with the cheaper association order.

    Both orders give identical results (binary operands keep the arithmetic
    exact); the multiply count decides between (Q K^T) V and Q (K^T V).
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    nq, d = q.shape[-2], q.shape[-1]
    nk = k.shape[-2]
    batch = int(np.prod(q.shape[:-2], dtype=np.int64))
    cost_outer = 2 * nq * nk * d          # (Q K^T) V
    cost_inner = (nq + nk) * d * d        # Q (K^T V)
    k_t = k.swapaxes(-1, -2)
    if cost_outer <= cost_inner:
        out = matmul(matmul(q, k_t), v)
        if counter is not None:
            counter.add(multiplies=batch * cost_outer)
    else:
        out = matmul(q, matmul(k_t, v))
        if counter is not None:
            counter.add(multiplies=batch * cost_inner)
    return out


class _ProjectSpike:
    """{Linear, BN, LIF} stage in front of the fusion attention products."""

    def __init__(self, d: int, lif: LIFParams, rng: np.random.Generator):
        self.linear = Linear(d, d, rng, bias=False)
        self.bn = BatchNorm(d)
        self.neuron = LIFNeuron(lif)

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        return self.neuron(self.bn(self.linear(x), train))

    def param_dict(self):
        params = prefixed(self.linear.param_dict(), "linear")
        params.update(prefixed(self.bn.param_dict(), "bn"))
        return params

    def buffer_dict(self):
        return prefixed(self.bn.buffer_dict(), "bn")

    def load_buffers(self, buffers):
        self.bn.load_buffers({k.split("/", 1)[1]: v for k, v in buffers.items()
                              if k.startswith("bn/")})


class SpikeCrossAttention:
    """One direction of spike cross attention: query tokens attend to the
    other modality's keys/values, output keeps the query token count."""

    def __init__(self, d: int, lif: LIFParams, rng: np.random.Generator):
        self.proj_q = _ProjectSpike(d, lif, rng)
        self.proj_k = _ProjectSpike(d, lif, rng)
        self.proj_v = _ProjectSpike(d, lif, rng)
        self.w_out = Linear(d, d, rng, bias=False)
        self.bn_out = BatchNorm(d)
        self.neuron_out = LIFNeuron(lif)

    def __call__(self, x_q: Tensor, x_kv: Tensor, train: bool,
                 counter: OpCounter | None = None) -> Tensor:
        q = self.proj_q(x_q, train)
        k = self.proj_k(x_kv, train)
        v = self.proj_v(x_kv, train)
        attn = qkv_attention(q, k, v, counter)
        return self.neuron_out(self.bn_out(self.w_out(attn), train))

    def param_dict(self):
        params: dict[str, Tensor] = {}
        for name, mod in (("q", self.proj_q), ("k", self.proj_k),
                          ("v", self.proj_v)):
            params.update(prefixed(mod.param_dict(), name))
        params.update(prefixed(self.w_out.param_dict(), "out"))
        params.update(prefixed(self.bn_out.param_dict(), "bn_out"))
        return params

    def buffer_dict(self):
        buffers: dict[str, np.ndarray] = {}
        for name, mod in (("q", self.proj_q), ("k", self.proj_k),
                          ("v", self.proj_v)):
            buffers.update(prefixed(mod.buffer_dict(), name))
        buffers.update(prefixed(self.bn_out.buffer_dict(), "bn_out"))
        return buffers

    def load_buffers(self, buffers):
        for name, mod in (("q", self.proj_q), ("k", self.proj_k),
                          ("v", self.proj_v)):
            mod.load_buffers({k.split("/", 1)[1]: v for k, v in buffers.items()
                              if k.startswith(f"{name}/")})
        self.bn_out.load_buffers({k.split("/", 1)[1]: v for k, v in buffers.items()
                                  if k.startswith("bn_out/")})


class ConcatSelfAttention(SpikeCrossAttention):
    """Single-stream fusion: both token sets share one attention pass.

    Same parameter layout as the cross variant (shared Q/K/V/out stages);
    only the data flow differs: tokens are concatenated, attended jointly,
    and split back by modality.
    """

    def __call__(self, r: Tensor, e: Tensor, train: bool,
                 counter: OpCounter | None = None):
        r, e = as_tensor(r), as_tensor(e)
        if r.shape[-1] != e.shape[-1] or r.shape[:2] != e.shape[:2]:
            raise DimensionError(
                f"concat fusion needs matching (T, B, ., D); got {r.shape} "
                f"and {e.shape}"
            )
        n = r.shape[2]
        x = concat([r, e], axis=2)
        q = self.proj_q(x, train)
        k = self.proj_k(x, train)
        v = self.proj_v(x, train)
        attn = qkv_attention(q, k, v, counter)
        out = self.neuron_out(self.bn_out(self.w_out(attn), train))
        k_total = out.shape[2]
        r_bar = out[:, :, :n, :]
        e_bar = out[:, :, n:k_total, :]
        return r_bar, e_bar


class SpikeFusion:
    """Kind-dispatched fusion plus temporal pooling of both fused streams.

    ``call_count`` instruments the training-only contract: evaluation code
    paths must leave it untouched.
    """

    def __init__(self, cfg: FusionConfig, d: int, t: int, lif: LIFParams,
                 rng: np.random.Generator, comb_lif: LIFParams | None = None):
        self.cfg = cfg
        self.pool = TemporalPool(t)
        self.call_count = 0
        self.comb_lif = comb_lif or lif
        if cfg.kind == "scca":
            self.comb_to_regions = LIFNeuron(self.comb_lif)  # text combs mask images
            self.comb_to_words = LIFNeuron(self.comb_lif)    # image combs mask text
        elif cfg.kind == "sca":
            self.cross_r = SpikeCrossAttention(d, lif, rng)
            self.cross_e = SpikeCrossAttention(d, lif, rng)
        else:
            self.concat_attn = ConcatSelfAttention(d, lif, rng)

    def fuse_and_pool(self, r_spikes: Tensor, e_spikes: Tensor,
                      train: bool = True, counter: OpCounter | None = None):
        """Fuse the two pre-pool spike streams and pool each over time.

        Returns (r_bar, e_bar) float embeddings of shapes (B, N, D) and
        (B, L, D).
        """
        self.call_count += 1
        kind = self.cfg.kind
        if kind == "scca":
            r_fused = comb_mask(e_spikes, r_spikes, self.cfg.h,
                                self.comb_to_regions, counter)
            e_fused = comb_mask(r_spikes, e_spikes, self.cfg.h,
                                self.comb_to_words, counter)
        elif kind == "sca":
            r_fused = self.cross_r(r_spikes, e_spikes, train, counter)
            e_fused = self.cross_e(e_spikes, r_spikes, train, counter)
        else:
            r_fused, e_fused = self.concat_attn(r_spikes, e_spikes, train, counter)
        return self.pool(r_fused), self.pool(e_fused)

    def param_dict(self) -> dict[str, Tensor]:
        params = prefixed(self.pool.param_dict(), "pool")
        if self.cfg.kind == "sca":
            params.update(prefixed(self.cross_r.param_dict(), "cross_r"))
            params.update(prefixed(self.cross_e.param_dict(), "cross_e"))
        elif self.cfg.kind == "scsa":
            params.update(prefixed(self.concat_attn.param_dict(), "concat"))
        return params

    def buffer_dict(self) -> dict[str, np.ndarray]:
        if self.cfg.kind == "sca":
            buffers = prefixed(self.cross_r.buffer_dict(), "cross_r")
            buffers.update(prefixed(self.cross_e.buffer_dict(), "cross_e"))
            return buffers
        if self.cfg.kind == "scsa":
            return prefixed(self.concat_attn.buffer_dict(), "concat")
        return {}

    def load_buffers(self, buffers: dict[str, np.ndarray]):
        def sub(prefix):
            return {k.split("/", 1)[1]: v for k, v in buffers.items()
                    if k.startswith(f"{prefix}/")}

        if self.cfg.kind == "sca":
            self.cross_r.load_buffers(sub("cross_r"))
            self.cross_e.load_buffers(sub("cross_e"))
        elif self.cfg.kind == "scsa":
            self.concat_attn.load_buffers(sub("concat"))
