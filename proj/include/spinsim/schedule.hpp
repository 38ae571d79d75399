#pragma once

#include <cstddef>
#include <set>
#include <vector>

#include <json.hpp>

#include "circuit.hpp"

namespace spinsim {

struct GateRef {
  std::size_t layer = 0;
  std::size_t bond = 0;
  bool operator==(const GateRef&) const = default;
};

// Cone-ordered execution plan. Cell k owns sites (2k, 2k+1) (a single site at
// the right end of an odd chain). Cone k holds every gate in the backward
// light cone of cell k's final legs that no earlier cone claimed, ordered
// layer-major with bonds ascending, which is a valid execution order: any
// predecessor of a cone-k gate lies in some cone <= k.
struct Schedule {
  std::size_t n_sites = 0;
  std::size_t n_layers = 0;
  std::vector<std::vector<std::size_t>> cells;
  std::vector<std::vector<GateRef>> cones;

  std::size_t n_cells() const { return cells.size(); }

  std::size_t cell_of_site(std::size_t site) const { return site / 2; }

  // Number of distinct sites touched by cone k's gates and cell k itself.
  std::size_t cone_site_span(std::size_t k) const {
    std::set<std::size_t> sites(cells.at(k).begin(), cells.at(k).end());
    for (const GateRef& g : cones.at(k)) {
      sites.insert(g.bond);
      sites.insert(g.bond + 1);
    }
    return sites.size();
  }
};

inline Schedule build_schedule(const Circuit& c) {
  Schedule s;
  s.n_sites = c.n_sites;
  s.n_layers = c.n_layers();

  for (std::size_t site = 0; site < c.n_sites; site += 2) {
    std::vector<std::size_t> cell{site};
    if (site + 1 < c.n_sites) cell.push_back(site + 1);
    s.cells.push_back(std::move(cell));
  }

  // assigned[layer][gate index within layer]
  std::vector<std::vector<bool>> assigned(c.n_layers());
  for (std::size_t l = 0; l < c.n_layers(); ++l)
    assigned[l].assign(c.layers[l].gates.size(), false);

  for (const std::vector<std::size_t>& cell : s.cells) {
    // Backward reachability from the cell's final legs.
    std::vector<bool> support(c.n_sites, false);
    for (std::size_t site : cell) support[site] = true;
    std::vector<std::vector<bool>> needed(c.n_layers());
    for (std::size_t l = c.n_layers(); l-- > 0;) {
      needed[l].assign(c.layers[l].gates.size(), false);
      for (std::size_t g = 0; g < c.layers[l].gates.size(); ++g) {
        const std::size_t b = c.layers[l].gates[g].bond;
        if (support[b] || support[b + 1]) {
          needed[l][g] = true;
          support[b] = support[b + 1] = true;
        }
      }
    }
    std::vector<GateRef> cone;
    for (std::size_t l = 0; l < c.n_layers(); ++l)
      for (std::size_t g = 0; g < c.layers[l].gates.size(); ++g)
        if (needed[l][g] && !assigned[l][g]) {
          assigned[l][g] = true;
          cone.push_back(GateRef{l, c.layers[l].gates[g].bond});
        }
    s.cones.push_back(std::move(cone));
  }
  return s;
}

inline nlohmann::json schedule_to_json(const Schedule& s) {
  nlohmann::json cones = nlohmann::json::array();
  for (const std::vector<GateRef>& cone : s.cones) {
    nlohmann::json arr = nlohmann::json::array();
    for (const GateRef& g : cone) arr.push_back({g.layer, g.bond});
    cones.push_back(std::move(arr));
  }
  return cones;
}

}  // namespace spinsim
