#include "rcm/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <type_traits>

#include "rcm/error.hpp"

namespace rcm {

namespace {

constexpr std::uint32_t tag_of(const char (&s)[5]) {
    return std::uint32_t(std::uint8_t(s[0])) | std::uint32_t(std::uint8_t(s[1])) << 8 |
           std::uint32_t(std::uint8_t(s[2])) << 16 | std::uint32_t(std::uint8_t(s[3])) << 24;
}

constexpr std::uint32_t kPhi = tag_of("PHI_");
constexpr std::uint32_t kGradPhi = tag_of("GPHI");
constexpr std::uint32_t kFlux = tag_of("FLUX");
constexpr std::uint32_t kSigma = tag_of("SIGM");

template <class T>
void put(std::ostream& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<char, sizeof(T)> b;
    std::memcpy(b.data(), &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
    out.write(b.data(), sizeof(T));
}

template <class T>
bool get(std::istream& in, T& v) {
    std::array<char, sizeof(T)> b;
    if (!in.read(b.data(), sizeof(T))) return false;
    if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
    std::memcpy(&v, b.data(), sizeof(T));
    return true;
}

template <class T>
T need(std::istream& in, const char* what) {
    T v{};
    if (!get(in, v)) throw ConfigError(std::string("truncated environment file while reading ") + what);
    return v;
}

void put_section(std::ostream& out, std::uint32_t tag, int dir, int j, int k, std::span<const double> data) {
    put<std::uint32_t>(out, tag);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(dir));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(j));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(k));
    put<std::uint64_t>(out, data.size());
    for (double v : data) put(out, v);
}

}  // namespace

void write_environment(std::ostream& out, const Environment& env, const std::vector<CorrectorBundle>& bundles) {
    const Lattice& lat = env.lattice();
    put<std::uint32_t>(out, kEnvMagic);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(lat.dim()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(lat.side()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(env.spec().distribution.kind()));
    for (double a : env.conductances().values()) put(out, a);
    for (const auto& b : bundles) {
        put_section(out, kPhi, b.direction, 0, 0, b.phi.values());
        put_section(out, kGradPhi, b.direction, 0, 0, b.grad_phi.values());
        put_section(out, kFlux, b.direction, 0, 0, b.flux.values());
        for (const auto& [jk, s] : b.sigma) put_section(out, kSigma, b.direction, jk.first, jk.second, s.values());
    }
    if (!out) throw ConfigError("failed writing environment file");
}

EnvironmentFile read_environment(std::istream& in) {
    if (need<std::uint32_t>(in, "magic") != kEnvMagic) throw ConfigError("not an environment file (bad magic)");
    EnvironmentFile f;
    f.dim = static_cast<int>(need<std::uint32_t>(in, "dimension"));
    f.side = static_cast<int>(need<std::uint32_t>(in, "side"));
    const auto tag = need<std::uint32_t>(in, "distribution tag");
    if (f.dim < 1 || f.dim > 3 || f.side < 4 || !is_power_of_two(f.side) || tag > 4)
        throw ConfigError("environment file header is invalid");
    f.kind = static_cast<DistributionKind>(tag);
    const Lattice lat(f.dim, f.side);
    f.conductances = EdgeField(lat);
    for (double& a : f.conductances.values()) a = need<double>(in, "edges");

    std::map<int, CorrectorBundle> by_dir;
    std::uint32_t stag;
    while (get(in, stag)) {
        const int dir = static_cast<int>(need<std::uint32_t>(in, "section"));
        const int j = static_cast<int>(need<std::uint32_t>(in, "section"));
        const int k = static_cast<int>(need<std::uint32_t>(in, "section"));
        const auto count = need<std::uint64_t>(in, "section");
        if (dir < 0 || dir >= f.dim) throw ConfigError("section direction out of range");
        std::vector<double> data(count);
        for (double& v : data) v = need<double>(in, "section data");
        CorrectorBundle& b = by_dir[dir];
        b.direction = dir;
        auto expect = [&](std::size_t n) {
            if (count != n) throw ConfigError("section length does not match the box");
        };
        if (stag == kPhi) {
            expect(lat.volume());
            b.phi = VertexField(lat, std::move(data));
        } else if (stag == kGradPhi) {
            expect(lat.num_edges());
            b.grad_phi = VectorField(lat, std::move(data));
        } else if (stag == kFlux) {
            expect(lat.num_edges());
            b.flux = VectorField(lat, std::move(data));
        } else if (stag == kSigma) {
            expect(lat.volume());
            if (!(0 <= j && j < k && k < f.dim)) throw ConfigError("sigma section indices out of range");
            b.sigma[{j, k}] = VertexField(lat, std::move(data));
        } else {
            throw ConfigError("unknown section tag in environment file");
        }
    }
    for (auto& [d, b] : by_dir) f.bundles.push_back(std::move(b));
    return f;
}

Environment EnvironmentFile::environment(const EnvironmentSpec& spec) const {
    if (spec.dim != dim || spec.side != side || spec.distribution.kind() != kind)
        throw ConfigError("environment file does not match the requested spec");
    return Environment(spec, conductances);
}

void save_environment(const std::string& path, const Environment& env, const std::vector<CorrectorBundle>& bundles) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open " + path + " for writing");
    write_environment(out, env, bundles);
}

EnvironmentFile load_environment(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path);
    return read_environment(in);
}

}  // namespace rcm
