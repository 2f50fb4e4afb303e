#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "rcm/corrector.hpp"
#include "rcm/env.hpp"

namespace rcm {

// Binary container:
//   header   u32 magic "RCME", u32 d, u32 L, u32 distribution tag
//   edges    d L^d little-endian f64 in edge-index order
//   sections repeated until EOF:
//            u32 tag, u32 direction, u32 j, u32 k, u64 count, count f64
// Section tags: "PHI_" phi_i, "GPHI" grad phi_i, "FLUX" q_i, "SIGM" sigma_{ijk}.
inline constexpr std::uint32_t kEnvMagic = 0x454d4352;   // bytes "RCME"

struct EnvironmentFile {
    int dim = 0;
    int side = 0;
    DistributionKind kind = DistributionKind::Constant;
    EdgeField conductances;
    std::vector<CorrectorBundle> bundles;

    /// Rebuilds an Environment; the law must have the stored kind.
    Environment environment(const EnvironmentSpec& spec) const;
};

void write_environment(std::ostream& out, const Environment& env, const std::vector<CorrectorBundle>& bundles = {});
EnvironmentFile read_environment(std::istream& in);

void save_environment(const std::string& path, const Environment& env,
                      const std::vector<CorrectorBundle>& bundles = {});
EnvironmentFile load_environment(const std::string& path);

}  // namespace rcm
