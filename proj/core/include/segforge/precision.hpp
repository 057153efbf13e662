#pragma once

// Floating-point precision is a build switch. The library is compiled twice:
// once with float (training builds) and once with SEGFORGE_DOUBLE=1 (gradient
// checking). Each copy lives in its own inline namespace, so a program may link
// both and pick one per translation unit.

#if defined(SEGFORGE_DOUBLE) && SEGFORGE_DOUBLE
#define SEGFORGE_PRECISION_NS f64
#else
#define SEGFORGE_PRECISION_NS f32
#endif

#define SEGFORGE_NAMESPACE_BEGIN \
  namespace segforge {           \
  inline namespace SEGFORGE_PRECISION_NS {
#define SEGFORGE_NAMESPACE_END \
  }                            \
  }

SEGFORGE_NAMESPACE_BEGIN

#if defined(SEGFORGE_DOUBLE) && SEGFORGE_DOUBLE
using Real = double;
inline constexpr bool kDoublePrecision = true;
#else
using Real = float;
inline constexpr bool kDoublePrecision = false;
#endif

SEGFORGE_NAMESPACE_END
