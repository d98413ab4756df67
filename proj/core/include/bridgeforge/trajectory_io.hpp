#pragma once

#include <iosfwd>
#include <string>

#include "bridgeforge/integrator.hpp"

namespace bridgeforge {

/// Shortest decimal text that parses back to the same double.
[[nodiscard]] std::string format_real(double value);

/// Writes `path,step,t,x_0..x_{d-1},log_weight`, one row per (path, step).
void write_trajectory_csv(std::ostream& os, const TrajectoryBatch& batch);

/// Same format; several batches are concatenated with path indices offset so
/// they stay unique.
void write_trajectory_csv(std::ostream& os, const TrajectoryBatch& batch, std::size_t path_offset,
                          bool header);

}  // namespace bridgeforge
