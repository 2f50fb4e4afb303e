#include "rcm/fields.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rcm/error.hpp"

namespace rcm {

VertexField::VertexField(Lattice lattice, std::vector<double> values)
    : lattice_(std::move(lattice)), values_(std::move(values)) {
    if (values_.size() != lattice_.volume()) throw ContractError("vertex field length must equal L^d");
}

double VertexField::sum() const noexcept { return std::accumulate(values_.begin(), values_.end(), 0.0); }

double VertexField::norm2() const noexcept {
    double s = 0.0;
    for (double v : values_) s += v * v;
    return std::sqrt(s);
}

double VertexField::max_abs() const noexcept {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
}

void VertexField::subtract_mean() noexcept {
    const double m = mean();
    for (double& v : values_) v -= m;
}

VertexField& VertexField::operator+=(const VertexField& other) {
    if (other.size() != size()) throw ContractError("vertex field size mismatch");
    for (std::size_t x = 0; x < values_.size(); ++x) values_[x] += other.values_[x];
    return *this;
}

VertexField& VertexField::operator-=(const VertexField& other) {
    if (other.size() != size()) throw ContractError("vertex field size mismatch");
    for (std::size_t x = 0; x < values_.size(); ++x) values_[x] -= other.values_[x];
    return *this;
}

VertexField& VertexField::operator*=(double s) noexcept {
    for (double& v : values_) v *= s;
    return *this;
}

VectorField::VectorField(Lattice lattice, std::vector<double> values)
    : lattice_(std::move(lattice)), values_(std::move(values)) {
    if (values_.size() != lattice_.num_edges()) throw ContractError("vector field length must equal d L^d");
}

VertexField VectorField::component_field(int dir) const {
    const auto c = component(dir);
    return VertexField(lattice_, std::vector<double>(c.begin(), c.end()));
}

double VectorField::norm2() const noexcept {
    double s = 0.0;
    for (double v : values_) s += v * v;
    return std::sqrt(s);
}

double dot(const VertexField& a, const VertexField& b) {
    if (a.size() != b.size()) throw ContractError("vertex field size mismatch");
    double s = 0.0;
    for (std::size_t x = 0; x < a.size(); ++x) s += a[x] * b[x];
    return s;
}

double dot(const VectorField& a, const VectorField& b) {
    if (a.size() != b.size()) throw ContractError("vector field size mismatch");
    double s = 0.0;
    for (std::size_t e = 0; e < a.size(); ++e) s += a[e] * b[e];
    return s;
}

}  // namespace rcm
