#include "sgr/spectral_graph.hpp"

#include <cstdio>

namespace sgr {

void dump_edges(const SpectralGraph& g, std::ostream& out) {
  char buf[96];
  for (size_t e = 0; e < g.edges.size(); ++e) {
    std::snprintf(buf, sizeof(buf), "%lld %lld %.9g\n",
                  static_cast<long long>(g.edges[e].first),
                  static_cast<long long>(g.edges[e].second), g.edge_cosine[e]);
    out << buf;
  }
}

}  // namespace sgr
