#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rcm/lattice.hpp"

namespace rcm {

/// One real value per vertex of the box.
class VertexField {
public:
    VertexField() = default;
    explicit VertexField(Lattice lattice, double fill = 0.0)
        : lattice_(std::move(lattice)), values_(lattice_.volume(), fill) {}
    VertexField(Lattice lattice, std::vector<double> values);

    const Lattice& lattice() const noexcept { return lattice_; }
    std::size_t size() const noexcept { return values_.size(); }

    double& operator[](std::size_t x) noexcept { return values_[x]; }
    double operator[](std::size_t x) const noexcept { return values_[x]; }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }

    double sum() const noexcept;
    double mean() const noexcept { return sum() / static_cast<double>(values_.size()); }
    double norm2() const noexcept;
    double max_abs() const noexcept;
    void subtract_mean() noexcept;

    VertexField& operator+=(const VertexField& other);
    VertexField& operator-=(const VertexField& other);
    VertexField& operator*=(double s) noexcept;

private:
    Lattice lattice_;
    std::vector<double> values_;
};

/// d values per vertex; component i at x lives on the edge {x, x + e_i}.
/// The same layout stores edge data (conductances, fluxes).
class VectorField {
public:
    VectorField() = default;
    explicit VectorField(Lattice lattice, double fill = 0.0)
        : lattice_(std::move(lattice)), values_(lattice_.num_edges(), fill) {}
    VectorField(Lattice lattice, std::vector<double> values);

    const Lattice& lattice() const noexcept { return lattice_; }
    std::size_t size() const noexcept { return values_.size(); }

    double& operator()(int dir, std::size_t x) noexcept { return values_[dir * lattice_.volume() + x]; }
    double operator()(int dir, std::size_t x) const noexcept { return values_[dir * lattice_.volume() + x]; }
    double& operator[](std::size_t e) noexcept { return values_[e]; }
    double operator[](std::size_t e) const noexcept { return values_[e]; }

    std::span<double> component(int dir) noexcept {
        return std::span<double>(values_).subspan(dir * lattice_.volume(), lattice_.volume());
    }
    std::span<const double> component(int dir) const noexcept {
        return std::span<const double>(values_).subspan(dir * lattice_.volume(), lattice_.volume());
    }
    VertexField component_field(int dir) const;

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }

    double norm2() const noexcept;

private:
    Lattice lattice_;
    std::vector<double> values_;
};

using EdgeField = VectorField;

double dot(const VertexField& a, const VertexField& b);
double dot(const VectorField& a, const VectorField& b);

}  // namespace rcm
