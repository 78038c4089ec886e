#pragma once

// Scalar type selection. The library is built twice: the default float flavor
// used for training and the double flavor used by gradient-check suites. Each
// flavor lives in its own inline namespace so both can be linked into one
// binary without symbol clashes.

#ifdef IRFF_REAL_DOUBLE
#define IRFF_BEGIN_NAMESPACE \
    namespace irff {         \
    inline namespace f64 {
#else
#define IRFF_BEGIN_NAMESPACE \
    namespace irff {         \
    inline namespace f32 {
#endif
#define IRFF_END_NAMESPACE \
    }                      \
    }

IRFF_BEGIN_NAMESPACE

#ifdef IRFF_REAL_DOUBLE
using real = double;
#else
using real = float;
#endif

IRFF_END_NAMESPACE
