#include "odrg/firmware.hpp"

#include <iterator>
#include <stdexcept>

#include <fmt/format.h>

#include "odrg/assembler.hpp"
#include "odrg/core.hpp"
#include "odrg/error.hpp"
#include "odrg/isa.hpp"

namespace odrg {

const char* kernel_name(KernelKind k) {
  switch (k) {
    case KernelKind::Conv2D16: return "conv16";
    case KernelKind::MatMul24: return "matmul24";
    case KernelKind::MatMul32: return "matmul32";
  }
  return "?";
}

std::optional<KernelKind> kernel_from_name(std::string_view name) {
  for (KernelKind k : kAllKernels)
    if (name == kernel_name(k)) return k;
  return std::nullopt;
}

namespace {

template <typename... Args>
void emit(std::string& out, fmt::format_string<Args...> f, Args&&... args) {
  fmt::format_to(std::back_inserter(out), f, std::forward<Args>(args)...);
  out += '\n';
}

}  // namespace

std::string gen_resync_handler() {
  std::string s;
  emit(s, "__resync_handler:");
  emit(s, "  andi sp, sp, -4");
  for (unsigned r = 1; r <= 31; ++r)
    emit(s, "  sw x{}, {}(sp)", r, -kResyncFrameBytes + 4 * static_cast<int>(r - 1));
  for (std::size_t j = 0; j < kSavedCsrs.size(); ++j) {
    emit(s, "  csrr t0, {}", *isa::csr_name(kSavedCsrs[j]));
    emit(s, "  sw t0, {}(sp)", -kResyncFrameBytes + 4 * static_cast<int>(kNumGprs + j));
  }
  emit(s, "  csrr t0, mcause");
  emit(s, "  bgez t0, __fatal_trap");
  emit(s, "  addi sp, sp, {}", -kResyncFrameBytes);
  // ODRG unit of this group: base + 0x100 * GROUP_ID.
  emit(s, "  li t0, {:#x}", map::kClusterCtrlBase);
  emit(s, "  lw t0, {}(t0)", map::kCcGroupId);
  emit(s, "  slli t0, t0, 8");
  emit(s, "  lui t1, %hi({:#x})", map::kOdrgBase);
  emit(s, "  add t0, t0, t1");
  emit(s, "  sw sp, {}(t0)", map::kOdrgSpStore);
  emit(s, "  lw sp, {}(t0)", map::kOdrgSpStore);
  for (std::size_t j = 0; j < kSavedCsrs.size(); ++j) {
    emit(s, "  lw t0, {}(sp)", 4 * (kNumGprs + j));
    if (kSavedCsrs[j] != csr::kMhartid) emit(s, "  csrw {}, t0", *isa::csr_name(kSavedCsrs[j]));
  }
  for (unsigned r = 1; r <= 31; ++r)
    if (r != 2) emit(s, "  lw x{}, {}(sp)", r, 4 * (r - 1));
  emit(s, "  lw x2, 4(sp)");
  emit(s, "  mret");
  emit(s, "__fatal_trap:");
  emit(s, "  addi t0, t0, 0x100");
  emit(s, "  li t1, {:#x}", map::kExitReg);
  emit(s, "  sw t0, 0(t1)");
  emit(s, "  j __park");
  return s;
}

std::string runtime_prologue(uint32_t ncores_logical) {
  std::string s;
  emit(s, "_start:");
  emit(s, "  la t0, __resync_handler");
  emit(s, "  csrw mtvec, t0");
  emit(s, "  csrr a0, mhartid");
  emit(s, "  li t1, {:#x}", map::kClusterCtrlBase);
  emit(s, "  lw a1, {}(t1)", map::kCcNumHarts);
  emit(s, "  li t2, {}", ncores_logical);
  emit(s, "  bleu a1, t2, __nharts_ok");
  emit(s, "  mv a1, t2");
  emit(s, "__nharts_ok:");
  emit(s, "  bgeu a0, a1, __park");
  emit(s, "  li sp, {:#x}", kStackTop);
  emit(s, "  slli t2, a0, 10");
  emit(s, "  sub sp, sp, t2");
  emit(s, "  j main");
  emit(s, "__park:");
  emit(s, "  wfi");
  emit(s, "  j __park");
  return s;
}

ProgramImage build_program(std::string_view body, uint32_t ncores_logical) {
  std::string src = runtime_prologue(ncores_logical);
  src += body;
  if (!src.empty() && src.back() != '\n') src += '\n';
  src += gen_resync_handler();
  ProgramImage img = assemble(src);
  img.max_harts = std::min(ncores_logical, kMaxHarts);
  img.stack_region = kStackRegion;
  return img;
}

namespace {

// Rows [s1, s2) of `rows` for hart a0 out of a1: s0 = ceil(rows / a1).
void emit_row_split(std::string& s, unsigned rows) {
  emit(s, "  li t0, {}", rows);
  emit(s, "  add t1, t0, a1");
  emit(s, "  addi t1, t1, -1");
  emit(s, "  divu s0, t1, a1");
  emit(s, "  mul s1, s0, a0");
  emit(s, "  add s2, s1, s0");
  emit(s, "  bleu s2, t0, __rows_ok");
  emit(s, "  mv s2, t0");
  emit(s, "__rows_ok:");
  emit(s, "  bleu s1, s2, __rows_ok2");
  emit(s, "  mv s1, s2");
  emit(s, "__rows_ok2:");
  emit(s, "  li s3, 0");
}

// Compares words [s10, s11) with the expected copy at +t6, publishes the
// mismatch count, joins the barrier; hart 0 reports the sum.
void emit_check_and_exit(std::string& s, uint32_t err_addr) {
  emit(s, "__check:");
  emit(s, "  bgeu s10, s11, __check_done");
  emit(s, "  lw t3, 0(s10)");
  emit(s, "  add t4, s10, t6");
  emit(s, "  lw t4, 0(t4)");
  emit(s, "  beq t3, t4, __check_ok");
  emit(s, "  addi s3, s3, 1");
  emit(s, "__check_ok:");
  emit(s, "  addi s10, s10, 4");
  emit(s, "  j __check");
  emit(s, "__check_done:");
  emit(s, "  li t0, {:#x}", err_addr);
  emit(s, "  slli t1, a0, 2");
  emit(s, "  add t0, t0, t1");
  emit(s, "  sw s3, 0(t0)");
  emit(s, "  li t0, {:#x}", map::kEuBarrierAddr);
  emit(s, "  lw zero, 0(t0)");
  emit(s, "  bnez a0, __park");
  emit(s, "  li t0, {:#x}", err_addr);
  emit(s, "  li t1, 0");
  emit(s, "  li t5, 0");
  emit(s, "__sum:");
  emit(s, "  lw t2, 0(t0)");
  emit(s, "  add t5, t5, t2");
  emit(s, "  addi t0, t0, 4");
  emit(s, "  addi t1, t1, 1");
  emit(s, "  bne t1, a1, __sum");
  emit(s, "  li t0, {:#x}", map::kExitReg);
  emit(s, "  sw t5, 0(t0)");
  emit(s, "  j __park");
}

std::vector<uint32_t> pack_halfwords(const std::vector<int16_t>& h) {
  std::vector<uint32_t> w((h.size() + 1) / 2, 0);
  for (std::size_t i = 0; i < h.size(); ++i)
    w[i / 2] |= static_cast<uint32_t>(static_cast<uint16_t>(h[i])) << (16 * (i % 2));
  return w;
}

void check_layout(const ProgramImage& img) {
  for (const auto& b : img.data_init) {
    const AddressRange r{b.addr, b.addr + static_cast<uint32_t>(4 * b.words.size())};
    if (!map::in_tcdm(r.begin) || r.end > map::kTcdmEnd)
      throw Error(fmt::format("data block at 0x{:08x} leaves the TCDM", b.addr));
    if (r.overlaps(img.stack_region))
      throw Error(fmt::format("data block at 0x{:08x} overlaps the stacks", b.addr));
  }
  for (const auto& b : img.expected) {
    const AddressRange r{b.addr, b.addr + static_cast<uint32_t>(4 * b.words.size())};
    if (r.overlaps(img.stack_region))
      throw Error(fmt::format("output region at 0x{:08x} overlaps the stacks", b.addr));
  }
  const uint32_t end = img.load_addr + static_cast<uint32_t>(4 * img.words.size());
  if (img.entry < img.load_addr || img.entry >= end) throw Error("entry point outside the image");
}

}  // namespace

std::vector<uint32_t> matmul_reference(unsigned n, const std::vector<int32_t>& a,
                                       const std::vector<int32_t>& b) {
  std::vector<uint32_t> c(std::size_t{n} * n, 0);
  for (unsigned i = 0; i < n; ++i)
    for (unsigned j = 0; j < n; ++j) {
      uint32_t acc = 0;
      for (unsigned k = 0; k < n; ++k)
        acc += static_cast<uint32_t>(a[i * n + k]) * static_cast<uint32_t>(b[k * n + j]);
      c[i * n + j] = acc;
    }
  return c;
}

ProgramImage gen_matmul(unsigned n, uint32_t ncores_logical, const std::vector<int32_t>& a,
                        const std::vector<int32_t>& b) {
  const std::size_t nn = std::size_t{n} * n;
  if (a.size() != nn || b.size() != nn) throw std::invalid_argument("matrix size mismatch");
  const uint32_t bytes = static_cast<uint32_t>(4 * nn);
  const uint32_t addr_a = kDataBase;
  const uint32_t addr_b = addr_a + bytes;
  const uint32_t addr_c = addr_b + bytes;
  const uint32_t addr_exp = addr_c + bytes;
  const uint32_t addr_err = addr_exp + bytes;
  const uint32_t row = 4 * n;

  std::string s;
  emit(s, "main:");
  emit_row_split(s, n);
  emit(s, "  li t0, {}", row);
  emit(s, "  mul s4, s1, t0");
  emit(s, "  mul s7, s2, t0");
  emit(s, "  li t1, {:#x}", addr_c);
  emit(s, "  add s6, s4, t1");
  emit(s, "  add s7, s7, t1");
  emit(s, "  mv s10, s6");
  emit(s, "  mv s11, s7");
  emit(s, "  bgeu s6, s7, __mm_done");
  emit(s, "  li s5, {:#x}", addr_a);
  emit(s, "  add s5, s5, s4");
  emit(s, "  li s8, {:#x}", addr_b);
  emit(s, "  addi s9, s8, {}", row);
  emit(s, "__mm_row:");
  emit(s, "  mv a5, s8");
  emit(s, "__mm_col:");
  emit(s, "  mv a2, s5");
  emit(s, "  addi a4, s5, {}", row);
  emit(s, "  mv a3, a5");
  emit(s, "  li t5, 0");
  emit(s, "__mm_k:");
  emit(s, "  lw t3, 0(a2)");
  emit(s, "  lw t4, 0(a3)");
  emit(s, "  addi a2, a2, 4");
  emit(s, "  addi a3, a3, {}", row);
  emit(s, "  mul t3, t3, t4");
  emit(s, "  add t5, t5, t3");
  emit(s, "  bne a2, a4, __mm_k");
  emit(s, "  sw t5, 0(s6)");
  emit(s, "  addi s6, s6, 4");
  emit(s, "  addi a5, a5, 4");
  emit(s, "  bne a5, s9, __mm_col");
  emit(s, "  addi s5, s5, {}", row);
  emit(s, "  bne s6, s7, __mm_row");
  emit(s, "__mm_done:");
  emit(s, "  li t6, {}", addr_exp - addr_c);
  emit_check_and_exit(s, addr_err);

  ProgramImage img = build_program(s, ncores_logical);
  auto as_words = [](const std::vector<int32_t>& m) {
    return std::vector<uint32_t>(m.begin(), m.end());
  };
  const std::vector<uint32_t> c = matmul_reference(n, a, b);
  img.data_init = {{addr_a, as_words(a)}, {addr_b, as_words(b)}, {addr_exp, c}};
  img.expected = {{addr_c, c}, {addr_err, std::vector<uint32_t>(img.max_harts, 0)}};
  img.symbols["A"] = addr_a;
  img.symbols["B"] = addr_b;
  img.symbols["C"] = addr_c;
  img.symbols["EXP"] = addr_exp;
  img.symbols["ERR"] = addr_err;
  check_layout(img);
  return img;
}

std::vector<int16_t> conv2d_reference(const std::vector<int16_t>& input,
                                      const std::array<int16_t, 9>& w) {
  constexpr int n = kConvSize;
  std::vector<int16_t> out(std::size_t{n} * n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      uint32_t acc = 0;
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const int iy = y + ky - 1;
          const int ix = x + kx - 1;
          if (iy < 0 || iy >= n || ix < 0 || ix >= n) continue;
          acc += static_cast<uint32_t>(int32_t{input[iy * n + ix]} * int32_t{w[ky * 3 + kx]});
        }
      out[y * n + x] = static_cast<int16_t>(static_cast<uint16_t>(acc & 0xFFFF));
    }
  return out;
}

ProgramImage gen_conv2d(uint32_t ncores_logical, const std::vector<int16_t>& input,
                        const std::array<int16_t, 9>& weights) {
  constexpr unsigned n = kConvSize;
  constexpr unsigned padded = n + 2;
  if (input.size() != n * n) throw std::invalid_argument("conv input must be 32x32");

  // Zero border baked into the input buffer.
  std::vector<int16_t> in_padded(padded * padded, 0);
  for (unsigned y = 0; y < n; ++y)
    for (unsigned x = 0; x < n; ++x) in_padded[(y + 1) * padded + x + 1] = input[y * n + x];
  const std::vector<uint32_t> in_words = pack_halfwords(in_padded);
  const std::vector<uint32_t> w_words =
      pack_halfwords(std::vector<int16_t>(weights.begin(), weights.end()));
  const std::vector<uint32_t> exp_words = pack_halfwords(conv2d_reference(input, weights));

  const uint32_t addr_in = kDataBase;
  const uint32_t addr_w = addr_in + static_cast<uint32_t>(4 * in_words.size());
  const uint32_t addr_out = addr_w + 32;
  const uint32_t addr_exp = addr_out + static_cast<uint32_t>(4 * exp_words.size());
  const uint32_t addr_err = addr_exp + static_cast<uint32_t>(4 * exp_words.size());
  const unsigned in_row = 2 * padded;
  const unsigned out_row = 2 * n;

  static constexpr const char* kWeightRegs[9] = {"s4", "s5",  "s6",  "s7", "s8",
                                                 "s9", "s10", "s11", "a6"};
  std::string s;
  emit(s, "main:");
  emit_row_split(s, n);
  emit(s, "  li t0, {:#x}", addr_w);
  for (unsigned i = 0; i < 9; ++i) emit(s, "  lh {}, {}(t0)", kWeightRegs[i], 2 * i);
  emit(s, "  li t0, {}", in_row);
  emit(s, "  mul a2, s1, t0");
  emit(s, "  li t1, {:#x}", addr_in);
  emit(s, "  add a2, a2, t1");
  emit(s, "  li t1, {:#x}", addr_out);
  emit(s, "  slli a3, s1, 6");
  emit(s, "  add a3, a3, t1");
  emit(s, "  slli a5, s2, 6");
  emit(s, "  add a5, a5, t1");
  emit(s, "  mv a7, a3");
  emit(s, "  bgeu a3, a5, __cv_done");
  emit(s, "__cv_row:");
  emit(s, "  addi a4, a3, {}", out_row);
  emit(s, "__cv_px:");
  for (unsigned ky = 0; ky < 3; ++ky)
    for (unsigned kx = 0; kx < 3; ++kx) {
      const unsigned tap = ky * 3 + kx;
      emit(s, "  lh t3, {}(a2)", ky * in_row + 2 * kx);
      if (tap == 0) {
        emit(s, "  mul t5, t3, {}", kWeightRegs[tap]);
      } else {
        emit(s, "  mul t3, t3, {}", kWeightRegs[tap]);
        emit(s, "  add t5, t5, t3");
      }
    }
  emit(s, "  sh t5, 0(a3)");
  emit(s, "  addi a2, a2, 2");
  emit(s, "  addi a3, a3, 2");
  emit(s, "  bne a3, a4, __cv_px");
  emit(s, "  addi a2, a2, {}", in_row - out_row);
  emit(s, "  bne a3, a5, __cv_row");
  emit(s, "__cv_done:");
  emit(s, "  mv s10, a7");
  emit(s, "  mv s11, a5");
  emit(s, "  li t6, {}", addr_exp - addr_out);
  emit_check_and_exit(s, addr_err);

  ProgramImage img = build_program(s, ncores_logical);
  img.data_init = {{addr_in, in_words}, {addr_w, w_words}, {addr_exp, exp_words}};
  img.expected = {{addr_out, exp_words}, {addr_err, std::vector<uint32_t>(img.max_harts, 0)}};
  img.symbols["IN"] = addr_in;
  img.symbols["W"] = addr_w;
  img.symbols["OUT"] = addr_out;
  img.symbols["EXP"] = addr_exp;
  img.symbols["ERR"] = addr_err;
  check_layout(img);
  return img;
}

ProgramImage gen_kernel(const KernelSpec& spec) {
  Lcg rng(spec.seed);
  switch (spec.kind) {
    case KernelKind::MatMul24:
    case KernelKind::MatMul32: {
      const unsigned n = spec.kind == KernelKind::MatMul24 ? 24 : 32;
      std::vector<int32_t> a(n * n), b(n * n);
      for (auto& v : a) v = static_cast<int32_t>(rng.next() >> 24) - 128;
      for (auto& v : b) v = static_cast<int32_t>(rng.next() >> 24) - 128;
      return gen_matmul(n, spec.ncores_logical, a, b);
    }
    case KernelKind::Conv2D16: {
      std::vector<int16_t> in(kConvSize * kConvSize);
      std::array<int16_t, 9> w{};
      for (auto& v : in) v = static_cast<int16_t>(static_cast<int32_t>(rng.next() >> 20) - 2048);
      for (auto& v : w) v = static_cast<int16_t>(static_cast<int32_t>(rng.next() >> 28) - 8);
      return gen_conv2d(spec.ncores_logical, in, w);
    }
  }
  throw std::invalid_argument("unknown kernel");
}

}  // namespace odrg
