#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fluoro/numerics/tensor.hpp"

namespace fluoro::testing {

inline nx::Tensor random_tensor(nx::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                                bool requires_grad = true) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(nx::numel(shape));
    for (auto& x : v) x = u(rng);
    return nx::Tensor::from(std::move(shape), std::move(v), requires_grad);
}

inline std::vector<double> values(const nx::Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

// std::vector<bool> is not contiguous; metrics take span<const bool>.
struct Flags {
    std::unique_ptr<bool[]> data;
    std::size_t size = 0;

    Flags(std::initializer_list<int> init) : data(std::make_unique<bool[]>(init.size())), size(init.size()) {
        std::size_t i = 0;
        for (int v : init) data[i++] = v != 0;
    }
    Flags(std::size_t n, double p, std::mt19937_64& rng) : data(std::make_unique<bool[]>(n)), size(n) {
        std::bernoulli_distribution b(p);
        for (std::size_t i = 0; i < n; ++i) data[i] = b(rng);
    }
    std::span<const bool> span() const { return {data.get(), size}; }
};

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("fluoro_" + tag + "_" + std::to_string(rd()));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace fluoro::testing
