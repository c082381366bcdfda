"""Model hyperparameters and their JSON (de)serialization."""

from dataclasses import dataclass, field, asdict

from .errors import ConfigMismatch, InvalidKernel


@dataclass
class ModelConfig:
    embed_dim: int = 320           # dimension of the incoming residue embeddings
    model_dim: int = 128           # internal feature dimension shared by all scales
    num_down: int = 1              # stride-2 downsampling steps; scales = num_down + 1
    seg_lens: list = field(default_factory=lambda: [16, 8])  # per-scale segment length
    seg_kernel: int = 3            # odd neighborhood for the segment convolution
    group_size: list = field(default_factory=lambda: [8, 8])  # short-range group per scale
    num_blocks: int = 2            # stacked attention blocks per scale
    pool_hidden: int = 0           # 0 -> model_dim // 2

    def __post_init__(self):
        if isinstance(self.group_size, int):
            self.group_size = [self.group_size] * (self.num_down + 1)
        if self.pool_hidden <= 0:
            self.pool_hidden = max(1, self.model_dim // 2)
        self.validate()

    @property
    def num_scales(self):
        return self.num_down + 1

    def validate(self):
        if self.num_down < 0:
            raise ConfigMismatch("num_down must be >= 0")
        if len(self.seg_lens) != self.num_scales:
            raise ConfigMismatch(
                f"seg_lens needs {self.num_scales} entries, got {len(self.seg_lens)}"
            )
        if len(self.group_size) != self.num_scales:
            raise ConfigMismatch(
                f"group_size needs {self.num_scales} entries, got {len(self.group_size)}"
            )
        if any(l < 1 for l in self.seg_lens):
            raise ConfigMismatch("segment lengths must be >= 1")
        if any(g < 1 for g in self.group_size):
            raise ConfigMismatch("group sizes must be >= 1")
        if self.seg_kernel % 2 == 0 or self.seg_kernel < 1:
            raise InvalidKernel(f"segment kernel must be odd, got {self.seg_kernel}")
        if self.num_blocks < 1:
            raise ConfigMismatch("num_blocks must be >= 1")

    @property
    def min_sequence_length(self):
        """Shortest L for which every scale yields at least one segment."""
        return max(l * (1 << i) for i, l in enumerate(self.seg_lens))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)
