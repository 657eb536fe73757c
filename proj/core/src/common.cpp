#include "mznav/common.hpp"

// Header-only for now; this TU anchors the library when everything else is
// templated or inline.
namespace mznav {}
