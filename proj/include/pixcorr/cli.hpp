#pragma once

namespace pixcorr {

// Entry point for the pixcorr executable. Exit codes: 0 success,
// 1 configuration/usage error, 2 numeric divergence.
int dispatch(int argc, char** argv);

} // namespace pixcorr
