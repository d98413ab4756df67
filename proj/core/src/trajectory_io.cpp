#include "bridgeforge/trajectory_io.hpp"

#include <array>
#include <charconv>
#include <ostream>

namespace bridgeforge {

std::string format_real(double value) {
  std::array<char, 32> buffer{};
  const auto result = std::to_chars(buffer.data(), buffer.data() + buffer.size(), value);
  return {buffer.data(), result.ptr};
}

void write_trajectory_csv(std::ostream& os, const TrajectoryBatch& batch) {
  write_trajectory_csv(os, batch, 0, true);
}

void write_trajectory_csv(std::ostream& os, const TrajectoryBatch& batch, std::size_t path_offset,
                          bool header) {
  if (header) {
    os << "path,step,t";
    for (int i = 0; i < batch.dim; ++i) os << ",x_" << i;
    os << ",log_weight\n";
  }
  for (std::size_t n = 0; n < batch.n_paths; ++n) {
    const std::string log_weight = format_real(batch.log_weights[n]);
    for (int l = 0; l <= batch.grid.steps(); ++l) {
      os << (n + path_offset) << ',' << l << ',' << format_real(batch.grid.node(l));
      const auto x = batch.state(n, l);
      for (int i = 0; i < batch.dim; ++i) os << ',' << format_real(x[i]);
      os << ',' << log_weight << '\n';
    }
  }
}

}  // namespace bridgeforge
