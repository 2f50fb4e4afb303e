#include "rcm/lattice.hpp"

#include <cmath>

#include "rcm/error.hpp"

namespace rcm {

bool is_power_of_two(int n) noexcept { return n > 0 && (n & (n - 1)) == 0; }

Lattice::Lattice(int dim, int side) : dim_(dim), side_(side) {
    if (dim < 1 || dim > 3) throw ConfigError("lattice dimension must be 1, 2 or 3");
    if (side < 2) throw ConfigError("lattice side must be at least 2");
    volume_ = 1;
    for (int i = 0; i < dim; ++i) volume_ *= static_cast<std::size_t>(side);

    auto fwd = std::make_shared<std::vector<std::uint32_t>>(num_edges());
    auto bwd = std::make_shared<std::vector<std::uint32_t>>(num_edges());
    std::size_t stride = 1;
    for (int i = 0; i < dim; ++i) {
        for (std::size_t x = 0; x < volume_; ++x) {
            const auto c = static_cast<int>((x / stride) % side);
            const std::size_t base = x - static_cast<std::size_t>(c) * stride;
            (*fwd)[i * volume_ + x] = static_cast<std::uint32_t>(base + ((c + 1) % side) * stride);
            (*bwd)[i * volume_ + x] = static_cast<std::uint32_t>(base + ((c + side - 1) % side) * stride);
        }
        stride *= static_cast<std::size_t>(side);
    }
    fwd_ = std::move(fwd);
    bwd_ = std::move(bwd);
}

std::size_t Lattice::index(const Coord& c) const noexcept {
    std::size_t x = 0;
    for (int i = dim_ - 1; i >= 0; --i) {
        const int ci = ((c[i] % side_) + side_) % side_;
        x = x * static_cast<std::size_t>(side_) + static_cast<std::size_t>(ci);
    }
    return x;
}

Coord Lattice::coords(std::size_t x) const noexcept {
    Coord c{0, 0, 0};
    for (int i = 0; i < dim_; ++i) {
        c[i] = static_cast<int>(x % side_);
        x /= side_;
    }
    return c;
}

std::size_t Lattice::translate(std::size_t x, const Coord& offset) const noexcept {
    Coord c = coords(x);
    for (int i = 0; i < dim_; ++i) c[i] += offset[i];
    return index(c);
}

Coord Lattice::wrap_offset(const Coord& c) const noexcept {
    Coord w{0, 0, 0};
    for (int i = 0; i < dim_; ++i) {
        int v = ((c[i] % side_) + side_) % side_;
        if (v > side_ / 2) v -= side_;
        w[i] = v;
    }
    return w;
}

double Lattice::distance(std::size_t x, std::size_t y) const noexcept {
    const Coord a = coords(x);
    const Coord b = coords(y);
    double s = 0.0;
    for (int i = 0; i < dim_; ++i) {
        int diff = std::abs(a[i] - b[i]);
        diff = std::min(diff, side_ - diff);
        s += static_cast<double>(diff) * diff;
    }
    return std::sqrt(s);
}

}  // namespace rcm
