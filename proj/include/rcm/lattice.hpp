#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

namespace rcm {

/// Integer lattice coordinates; entries beyond the dimension are zero.
using Coord = std::array<int, 3>;

/// An oriented edge {x, x + e_dir}.
struct Edge {
    std::size_t vertex = 0;
    int dir = 0;
    friend bool operator==(const Edge&, const Edge&) = default;
};

/// The periodic box Z_L^d, d in {1, 2, 3}. Vertex index x = c0 + L c1 + L^2 c2.
/// Edge index = dir * L^d + vertex index. Copies share the neighbour tables.
class Lattice {
public:
    Lattice() = default;
    Lattice(int dim, int side);

    int dim() const noexcept { return dim_; }
    int side() const noexcept { return side_; }
    std::size_t volume() const noexcept { return volume_; }
    std::size_t num_edges() const noexcept { return volume_ * static_cast<std::size_t>(dim_); }

    std::size_t index(const Coord& c) const noexcept;
    Coord coords(std::size_t x) const noexcept;

    /// x + e_dir and x - e_dir with periodic wrap.
    std::size_t forward(std::size_t x, int dir) const noexcept { return (*fwd_)[dir * volume_ + x]; }
    std::size_t backward(std::size_t x, int dir) const noexcept { return (*bwd_)[dir * volume_ + x]; }

    std::size_t translate(std::size_t x, const Coord& offset) const noexcept;

    /// Representative of c in (-L/2, L/2] per coordinate.
    Coord wrap_offset(const Coord& c) const noexcept;
    /// Euclidean distance on the torus.
    double distance(std::size_t x, std::size_t y) const noexcept;
    /// Euclidean norm of the minimal image of x (distance to the origin).
    double norm(std::size_t x) const noexcept { return distance(x, 0); }

    std::size_t edge_index(const Edge& e) const noexcept { return static_cast<std::size_t>(e.dir) * volume_ + e.vertex; }
    Edge edge_at(std::size_t e) const noexcept {
        return {e % volume_, static_cast<int>(e / volume_)};
    }

    friend bool operator==(const Lattice& a, const Lattice& b) noexcept {
        return a.dim_ == b.dim_ && a.side_ == b.side_;
    }

private:
    int dim_ = 0;
    int side_ = 0;
    std::size_t volume_ = 0;
    std::shared_ptr<const std::vector<std::uint32_t>> fwd_;
    std::shared_ptr<const std::vector<std::uint32_t>> bwd_;
};

bool is_power_of_two(int n) noexcept;

}  // namespace rcm
