#include <cstdint>
#include <cstring>
#include <fstream>

#include "rsc/error.hpp"
#include "rsc/hjb.hpp"

namespace rsc {

namespace {

constexpr char kMagic[8] = {'R', 'S', 'C', 'V', 'G', '0', '0', '1'};

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw ConfigError("truncated value-grid file");
  return v;
}

}  // namespace

void write_value_grid_csv(const ValueGrid& grid, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out.precision(17);
  out << "# rsc-value-grid v1\n";
  out << "# dim=" << grid.dim() << " n_t=" << grid.t_nodes.size() << "\n";
  for (std::size_t d = 0; d < grid.dim(); ++d) {
    out << "# axis_" << d + 1 << "=" << grid.axes[d].front() << "," << grid.axes[d].back() << ","
        << grid.axes[d].size() << "\n";
  }
  out << "# dt=" << grid.meta.dt << " cfl=" << grid.meta.cfl
      << " boundary=" << grid.meta.boundary << "\n";
  out << "t_index,t";
  for (std::size_t d = 0; d < grid.dim(); ++d) out << ",x_" << d + 1;
  out << ",V,policy\n";
  const std::size_t ns = grid.n_space();
  std::vector<std::size_t> coord(grid.dim());
  for (std::size_t j = 0; j < grid.t_nodes.size(); ++j) {
    for (std::size_t node = 0; node < ns; ++node) {
      std::size_t rem = node;
      for (std::size_t d = grid.dim(); d-- > 0;) {
        coord[d] = rem % grid.axes[d].size();
        rem /= grid.axes[d].size();
      }
      out << j << ',' << grid.t_nodes[j];
      for (std::size_t d = 0; d < grid.dim(); ++d) out << ',' << grid.axes[d][coord[d]];
      out << ',' << grid.V[j * ns + node] << ',' << grid.policy[j * ns + node] << '\n';
    }
  }
}

void write_value_grid_binary(const ValueGrid& grid, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out.write(kMagic, sizeof kMagic);
  put<std::uint64_t>(out, grid.dim());
  put<std::uint64_t>(out, grid.t_nodes.size());
  for (const auto& a : grid.axes) {
    put<std::uint64_t>(out, a.size());
    out.write(reinterpret_cast<const char*>(a.data()), static_cast<std::streamsize>(a.size() * sizeof(double)));
  }
  out.write(reinterpret_cast<const char*>(grid.t_nodes.data()),
            static_cast<std::streamsize>(grid.t_nodes.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(grid.V.data()),
            static_cast<std::streamsize>(grid.V.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(grid.policy.data()),
            static_cast<std::streamsize>(grid.policy.size() * sizeof(std::int32_t)));
}

ValueGrid read_value_grid_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw ConfigError(path + " is not a value-grid file");
  }
  ValueGrid g;
  const auto dim = get<std::uint64_t>(in);
  const auto n_t = get<std::uint64_t>(in);
  if (dim == 0 || dim > 16 || n_t == 0) throw ConfigError("corrupt value-grid header");
  for (std::uint64_t d = 0; d < dim; ++d) {
    const auto sz = get<std::uint64_t>(in);
    std::vector<double> a(sz);
    in.read(reinterpret_cast<char*>(a.data()), static_cast<std::streamsize>(sz * sizeof(double)));
    g.axes.push_back(std::move(a));
  }
  g.t_nodes.resize(n_t);
  in.read(reinterpret_cast<char*>(g.t_nodes.data()), static_cast<std::streamsize>(n_t * sizeof(double)));
  const std::size_t total = n_t * g.n_space();
  g.V.resize(total);
  g.policy.resize(total);
  in.read(reinterpret_cast<char*>(g.V.data()), static_cast<std::streamsize>(total * sizeof(double)));
  in.read(reinterpret_cast<char*>(g.policy.data()),
          static_cast<std::streamsize>(total * sizeof(std::int32_t)));
  if (!in) throw ConfigError("truncated value-grid file " + path);
  for (const auto& a : g.axes) g.meta.dx.push_back(a.size() > 1 ? a[1] - a[0] : 0.0);
  return g;
}

}  // namespace rsc
