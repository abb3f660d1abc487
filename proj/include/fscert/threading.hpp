#pragma once

namespace fscert {

// Number of worker lanes to use for data-parallel kernels.
// Honors the FSCERT_THREADS environment variable; defaults to the OpenMP
// thread budget. Always >= 1.
int worker_lanes();

}  // namespace fscert
