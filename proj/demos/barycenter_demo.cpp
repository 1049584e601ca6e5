// Interpolates between the two bundled images with entropic and quadratic
// barycenters and writes the results next to the working directory.

#include <cstdio>
#include <string>

#include "gsot/gsot.hpp"

int main(int argc, char** argv) {
  using namespace gsot;
  const std::string dir = argc > 1 ? argv[1] : GSOT_DATA_DIR;
  const auto ring = read_pgm(read_file(dir + "/ring.pgm"), /*invert=*/true);
  const auto cross = read_pgm(read_file(dir + "/cross.pgm"), /*invert=*/true);
  GridSpec grid = ring.grid;
  grid.scale = GridScale::Pixel;
  const CostMatrix cost = grid_cost(grid);

  BarycenterOptions opts;
  opts.solver.max_iters = 500;
  opts.fixed_iterations = true;
  opts.trace_stride = 500;
  for (double w : {0.25, 0.5, 0.75}) {
    const BarycenterProblem problem({ring.histogram, cross.histogram}, Vector{{w, 1.0 - w}});
    const auto blurred = entropic_barycenter(gibbs_kernel(cost, 1.0), problem, opts);
    const auto sharp = generalized_barycenter(RegularizerSpec::quadratic(200.0), cost, problem, opts);
    const std::string tag = std::to_string(static_cast<int>(100 * w));
    write_file("entropic_" + tag + ".pgm", write_pgm(blurred.barycenter, grid, 255, true));
    write_file("quadratic_" + tag + ".pgm", write_pgm(sharp.barycenter, grid, 255, true));
    std::printf("ring weight %.2f: entropic support %ld px, quadratic support %ld px\n", w,
                static_cast<long>((blurred.barycenter.array() > 1e-12).count()),
                static_cast<long>((sharp.barycenter.array() > 1e-12).count()));
  }
}
