#include <cstdlib>
#include <stdexcept>
#include <string>

#include "divco/kernels/kernels.hpp"

namespace divco::kernels {

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
    case Isa::kNeon: return "neon";
  }
  return "unknown";
}

std::vector<const KernelTable*> available_kernels() {
  std::vector<const KernelTable*> out{&scalar_kernels()};
  if (const auto* t = avx2_kernels()) out.push_back(t);
  if (const auto* t = neon_kernels()) out.push_back(t);
  return out;
}

namespace {

const KernelTable& select() {
  const char* forced = std::getenv("DIVCO_ISA");
  if (forced != nullptr && *forced != '\0') {
    const std::string want(forced);
    for (const auto* t : available_kernels()) {
      if (isa_name(t->isa) == want) return *t;
    }
    throw std::runtime_error("DIVCO_ISA=" + want + " is not available on this machine");
  }
  if (const auto* t = avx2_kernels()) return *t;
  if (const auto* t = neon_kernels()) return *t;
  return scalar_kernels();
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace divco::kernels
