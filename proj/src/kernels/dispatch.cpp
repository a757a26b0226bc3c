#include <atomic>
#include <cstdlib>
#include <optional>
#include <string>

#include "dclone/error.hpp"
#include "variants.hpp"

namespace dclone::kernels {
namespace {

bool cpu_has(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(DCLONE_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      __builtin_cpu_init();
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::kNeon:
#if defined(DCLONE_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& scalar_table() {
  static const KernelTable t = scalar::make_table();
  return t;
}

std::optional<Isa> parse_isa(const std::string& name) {
  if (name == "scalar") return Isa::kScalar;
  if (name == "avx2") return Isa::kAvx2;
  if (name == "neon") return Isa::kNeon;
  return std::nullopt;
}

Isa pick_default() {
  if (const char* env = std::getenv("DCLONE_SIMD")) {
    if (auto isa = parse_isa(env); isa && cpu_has(*isa)) return *isa;
  }
  if (cpu_has(Isa::kAvx2)) return Isa::kAvx2;
  if (cpu_has(Isa::kNeon)) return Isa::kNeon;
  return Isa::kScalar;
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{&table(pick_default())};
  return slot;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
    case Isa::kNeon:
      return "neon";
  }
  return "unknown";
}

bool supported(Isa isa) { return cpu_has(isa); }

std::vector<Isa> supported_isas() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::kScalar, Isa::kAvx2, Isa::kNeon}) {
    if (supported(isa)) out.push_back(isa);
  }
  return out;
}

const KernelTable& table(Isa isa) {
  if (!supported(isa)) {
    fail(ErrorCode::kUnsupported,
         "kernel variant '" + std::string(isa_name(isa)) + "' not available on this CPU");
  }
  switch (isa) {
#if defined(DCLONE_HAVE_AVX2)
    case Isa::kAvx2: {
      static const KernelTable t = avx2::make_table();
      return t;
    }
#endif
#if defined(DCLONE_HAVE_NEON)
    case Isa::kNeon: {
      static const KernelTable t = neon::make_table();
      return t;
    }
#endif
    default:
      return scalar_table();
  }
}

const KernelTable& active() { return *active_slot().load(std::memory_order_acquire); }

void set_active(Isa isa) { active_slot().store(&table(isa), std::memory_order_release); }

}  // namespace dclone::kernels
