#include "fgsb/bridge.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace fgsb {

std::vector<std::uint8_t> rng_state(const Rng& rng) {
    const auto state = rng.get_state().contiguous();
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(state.numel()));
    std::memcpy(bytes.data(), state.data_ptr<std::uint8_t>(), bytes.size());
    return bytes;
}

void set_rng_state(Rng& rng, const std::vector<std::uint8_t>& state) {
    auto tensor = torch::empty({static_cast<std::int64_t>(state.size())}, torch::kUInt8);
    std::memcpy(tensor.data_ptr<std::uint8_t>(), state.data(), state.size());
    rng.set_state(tensor);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
    std::uint64_t x = base ^ (tag * 0x9E3779B97F4A7C15ULL);
    x = (x ^ (x >> 30U)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27U)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31U);
}

std::vector<double> default_s_schedule(std::int64_t nfe) {
    if (nfe < 1) {
        throw std::invalid_argument("nfe must be >= 1");
    }
    std::vector<double> s(static_cast<std::size_t>(nfe + 1), 1.0);
    for (std::int64_t i = 1; i <= nfe; ++i) {
        s[static_cast<std::size_t>(i)] = 0.9 * (1.0 - static_cast<double>(i - 1) / static_cast<double>(nfe));
    }
    return s;
}

BridgeConfig BridgeConfig::with_defaults(std::int64_t nfe, double tau) {
    BridgeConfig cfg;
    cfg.nfe = nfe;
    cfg.tau = tau;
    cfg.s_schedule = default_s_schedule(nfe);
    return cfg;
}

double BridgeConfig::s(std::int64_t step) const {
    if (step < 1 || step > nfe) {
        throw std::out_of_range("s-schedule index " + std::to_string(step) + " outside [1, " + std::to_string(nfe) + "]");
    }
    return s_schedule.at(static_cast<std::size_t>(step));
}

void BridgeConfig::validate() const {
    if (nfe < 1) {
        throw std::invalid_argument("bridge.nfe must be >= 1");
    }
    if (!std::isfinite(tau) || tau < 0.0) {
        throw std::invalid_argument("bridge.tau must be finite and >= 0");
    }
    if (s_schedule.size() != static_cast<std::size_t>(nfe + 1)) {
        throw std::invalid_argument("bridge.s_schedule must hold nfe + 1 values");
    }
    for (std::size_t i = 0; i < s_schedule.size(); ++i) {
        if (!(s_schedule[i] >= 0.0 && s_schedule[i] <= 1.0)) {
            throw std::invalid_argument("bridge.s_schedule values must lie in [0, 1]");
        }
        if (i >= 2 && s_schedule[i] > s_schedule[i - 1]) {
            throw std::invalid_argument("bridge.s_schedule must be non-increasing after index 1");
        }
    }
}

std::int64_t sample_timestep(Rng& rng, std::int64_t nfe) {
    if (nfe < 1) {
        throw std::invalid_argument("nfe must be >= 1");
    }
    return torch::randint(0, nfe + 1, {1}, rng, torch::kLong).item<std::int64_t>();
}

namespace {

torch::Tensor gaussian_like(const torch::Tensor& like, double variance, Rng& rng) {
    return torch::randn(like.sizes(), rng, like.options()) * std::sqrt(variance);
}

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
    if (!a.sizes().equals(b.sizes())) {
        throw std::invalid_argument(std::string(what) + ": image shapes differ");
    }
}

}  // namespace

torch::Tensor bridge_posterior_sample(const torch::Tensor& x_A, const torch::Tensor& x_B, double t, double tau,
                                      Rng& rng) {
    require_same_shape(x_A, x_B, "bridge_posterior_sample");
    if (!(t >= 0.0 && t <= 1.0)) {
        throw std::out_of_range("bridge_posterior_sample: t must lie in [0, 1]");
    }
    if (tau < 0.0) {
        throw std::invalid_argument("bridge_posterior_sample: tau must be >= 0");
    }
    auto mean = x_B * t + x_A * (1.0 - t);
    const double variance = t * (1.0 - t) * tau;
    if (variance == 0.0) {
        return mean;
    }
    return mean + gaussian_like(mean, variance, rng);
}

torch::Tensor training_transition(const torch::Tensor& x_B, const torch::Tensor& x_hat_prev, double s, double tau,
                                  Rng& rng) {
    require_same_shape(x_B, x_hat_prev, "training_transition");
    if (!(s >= 0.0 && s <= 1.0)) {
        throw std::out_of_range("training_transition: s must lie in [0, 1]");
    }
    auto mix = x_B * s + x_hat_prev * (1.0 - s);
    if (tau == 0.0) {
        return mix;
    }
    return mix + gaussian_like(mix, tau, rng);
}

torch::Tensor inference_transition(const torch::Tensor& x_hat_prev, double tau, Rng& rng) {
    if (tau == 0.0) {
        return x_hat_prev.clone();
    }
    return x_hat_prev + gaussian_like(x_hat_prev, tau, rng);
}

}  // namespace fgsb
