#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "odrg/memory_map.hpp"
#include "odrg/program.hpp"

namespace odrg {

enum class KernelKind : uint8_t { Conv2D16, MatMul24, MatMul32 };

const char* kernel_name(KernelKind k);  // "conv16", "matmul24", "matmul32"
std::optional<KernelKind> kernel_from_name(std::string_view name);
inline constexpr std::array<KernelKind, 3> kAllKernels = {KernelKind::Conv2D16, KernelKind::MatMul24,
                                                          KernelKind::MatMul32};

struct KernelSpec {
  KernelKind kind = KernelKind::MatMul24;
  uint32_t ncores_logical = 6;  // upper bound; the boot mode may offer fewer
  uint64_t seed = 1;
};

// Input generator: x' = 1664525 * x + 1013904223 (mod 2^32), starting from
// the 64-bit seed folded to 32 bits (low ^ high). Each draw advances first.
class Lcg {
 public:
  explicit Lcg(uint64_t seed)
      : x_(static_cast<uint32_t>(seed) ^ static_cast<uint32_t>(seed >> 32)) {}
  uint32_t next() {
    x_ = 1664525u * x_ + 1013904223u;
    return x_;
  }

 private:
  uint32_t x_;
};

// Runtime layout.
inline constexpr uint32_t kStackBytes = 1024;
inline constexpr uint32_t kMaxHarts = 6;
inline constexpr uint32_t kStackTop = map::kTcdmEnd;
inline constexpr AddressRange kStackRegion{kStackTop - kMaxHarts * kStackBytes, kStackTop};
inline constexpr uint32_t kDataBase = map::kTcdmBase;

// Frame layout used by the resync handler: x1..x31 then the CSR save set.
inline constexpr int32_t kResyncFrameBytes = 41 * 4;

// Resync interrupt handler, installed at mtvec. Saves the 41-word state
// below sp, publishes the frame address through SP_STORE, reloads every word
// from the voted copy and returns with mret. Synchronous exceptions are
// reported through the exit register (0x100 + mcause).
std::string gen_resync_handler();

// Boot code: installs mtvec, reads the hart ID and active hart count, gives
// each active hart a 1 KiB stack and enters `main` with a0 = hart ID and
// a1 = active harts. Harts beyond min(ncores_logical, NHARTS) park in wfi.
std::string runtime_prologue(uint32_t ncores_logical);

// Complete program: prologue, `body` (must define main), handler.
ProgramImage build_program(std::string_view body, uint32_t ncores_logical = kMaxHarts);

// Kernels. Output rows are split into contiguous blocks across the active
// harts; each hart checks its block against the embedded expected values,
// hart 0 sums the per-hart error counts after a barrier and writes the
// total to the exit register.
ProgramImage gen_kernel(const KernelSpec& spec);
ProgramImage gen_matmul(unsigned n, uint32_t ncores_logical, const std::vector<int32_t>& a,
                        const std::vector<int32_t>& b);
inline constexpr unsigned kConvSize = 32;  // output is kConvSize x kConvSize
ProgramImage gen_conv2d(uint32_t ncores_logical, const std::vector<int16_t>& input,
                        const std::array<int16_t, 9>& weights);

// Host-side references.
std::vector<uint32_t> matmul_reference(unsigned n, const std::vector<int32_t>& a,
                                       const std::vector<int32_t>& b);
// 3x3 convolution with zero padding; 16-bit wrap-around results.
std::vector<int16_t> conv2d_reference(const std::vector<int16_t>& input,
                                      const std::array<int16_t, 9>& weights);

}  // namespace odrg
