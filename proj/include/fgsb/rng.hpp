#pragma once

#include <cstdint>
#include <vector>

#include <ATen/CPUGeneratorImpl.h>
#include <ATen/core/Generator.h>

namespace fgsb {

/// Explicit random stream threaded through every stochastic operation.
using Rng = at::Generator;

[[nodiscard]] inline Rng make_rng(std::uint64_t seed) { return at::detail::createCPUGenerator(seed); }

/// Opaque generator state, suitable for checkpointing.
[[nodiscard]] std::vector<std::uint8_t> rng_state(const Rng& rng);
void set_rng_state(Rng& rng, const std::vector<std::uint8_t>& state);

/// Derives an independent stream seed from a base seed and a stream tag.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);

}  // namespace fgsb
