#include "predgan/da/observations.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "predgan/util/error.hpp"

namespace predgan::da {

namespace {

const char* group_name(const std::optional<epi::Group>& g) {
  if (!g) return "all";
  return *g == epi::Group::Home ? "home" : "mobile";
}

std::optional<epi::Group> parse_group(const std::string& s) {
  if (s == "home") return epi::Group::Home;
  if (s == "mobile") return epi::Group::Mobile;
  if (s == "all") return std::nullopt;
  throw Error("unknown observation group '" + s + "'");
}


epi::Compartment parse_compartment(const std::string& s) {
  static const std::string names = "SEIR";
  if (s.size() != 1 || names.find(s[0]) == std::string::npos) {
    throw Error("unknown compartment '" + s + "'");
  }
  return static_cast<epi::Compartment>(names.find(s[0]));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t\r"));
    item.erase(item.find_last_not_of(" \t\r") + 1);
    out.push_back(item);
  }
  return out;
}

}  // namespace

ObservationSet::ObservationSet(std::vector<Observation> entries, std::size_t n_cells)
    : entries_(std::move(entries)), n_cells_(n_cells) {
  if (entries_.empty()) throw Error("observation set is empty");
  std::set<std::tuple<std::size_t, std::size_t, int, int>> seen;
  for (const auto& o : entries_) {
    if (!(o.weight >= 0.0)) throw Error("observation weights must be non-negative");
    if (o.cell >= n_cells_) throw Error("observation cell " + std::to_string(o.cell) + " is outside the grid");
    const int g = o.group ? static_cast<int>(*o.group) : -1;
    if (!seen.emplace(o.level, o.cell, g, static_cast<int>(o.compartment)).second) {
      throw Error("repeated observation at level " + std::to_string(o.level) + ", cell " +
                  std::to_string(o.cell));
    }
  }
}

std::size_t ObservationSet::level_count() const {
  std::size_t n = 0;
  for (const auto& o : entries_) n = std::max(n, o.level + 1);
  return n;
}

std::vector<std::size_t> ObservationSet::slots(const Observation& o) const {
  std::vector<std::size_t> out;
  for (int g = 0; g < epi::kGroups; ++g) {
    if (o.group && static_cast<int>(*o.group) != g) continue;
    const std::size_t field = static_cast<std::size_t>(g * epi::kCompartments) +
                              static_cast<std::size_t>(o.compartment);
    out.push_back(field * n_cells_ + o.cell);
  }
  return out;
}

double ObservationSet::weight_sum(std::size_t begin, std::size_t end) const {
  double s = 0.0;
  for (const auto& o : entries_) {
    if (o.level >= begin && o.level < end) s += o.weight;
  }
  return s;
}

ObservationSet ObservationSet::read_csv(const std::filesystem::path& path, const epi::Grid& grid) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open observation file " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw IoError(path.string() + " is empty");
  const auto header = split_csv(line);
  const std::vector<std::string> expected{"time_level", "cell_x", "cell_y", "group",
                                          "compartment", "value", "weight"};
  if (header != expected) throw IoError(path.string() + ": unexpected observation header");
  std::vector<Observation> entries;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split_csv(line);
    if (f.size() != expected.size()) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected 7 columns");
    }
    try {
      Observation o;
      o.level = std::stoul(f[0]);
      const std::size_t x = std::stoul(f[1]);
      const std::size_t y = std::stoul(f[2]);
      if (x >= grid.nx || y >= grid.ny) throw Error("cell outside the grid");
      o.cell = grid.index(x, y);
      o.group = parse_group(f[3]);
      o.compartment = parse_compartment(f[4]);
      o.value = std::stod(f[5]);
      o.weight = std::stod(f[6]);
      entries.push_back(o);
    } catch (const std::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return ObservationSet(std::move(entries), grid.n_cells());
}

void ObservationSet::write_csv(const std::filesystem::path& path, const epi::Grid& grid) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.precision(17);
  os << "time_level,cell_x,cell_y,group,compartment,value,weight\n";
  for (const auto& o : entries_) {
    os << o.level << ',' << grid.x_of(o.cell) << ',' << grid.y_of(o.cell) << ','
       << group_name(o.group) << ',' << epi::compartment_name(o.compartment) << ',' << o.value << ','
       << o.weight << '\n';
  }
}

ObservationSet sample_observations(std::span<const std::vector<double>> states,
                                   std::size_t n_cells, const ObservationPlan& plan,
                                   double noise, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::vector<Observation> entries;
  for (std::size_t k : plan.levels) {
    if (k >= states.size()) throw Error("observation level " + std::to_string(k) + " beyond the run");
    if (states[k].size() != epi::kFieldsPerCell * n_cells) throw ShapeError("state vector has wrong length");
    for (std::size_t c : plan.cells) {
      for (const auto& g : plan.groups) {
        for (auto comp : plan.compartments) {
          Observation o{k, c, g, comp, 0.0, plan.weight};
          for (int gi = 0; gi < epi::kGroups; ++gi) {
            if (g && static_cast<int>(*g) != gi) continue;
            const std::size_t field = static_cast<std::size_t>(gi * epi::kCompartments) +
                                      static_cast<std::size_t>(comp);
            o.value += states[k][field * n_cells + c];
          }
          o.value = std::max(0.0, o.value * (1.0 + noise * normal(rng)));
          entries.push_back(o);
        }
      }
    }
  }
  return ObservationSet(std::move(entries), n_cells);
}

ObservationOperator::ObservationOperator(const ObservationSet& obs, const rom::PodBasis& basis,
                                         const rom::Normalizer& normalizer)
    : n_alpha_(basis.n_pod()) {
  if (normalizer.n_channels() < n_alpha_) throw ShapeError("normalizer has fewer channels than the basis");
  if (basis.n_state() != epi::kFieldsPerCell * obs.n_cells()) {
    throw ShapeError("basis state length does not match the observation grid");
  }
  by_level_.resize(obs.level_count());
  for (const auto& o : obs.entries()) {
    // u_slot = sum_i B(slot, i) * a_i + mean(slot), a_i = lo_i + (x_i + 1) * range_i / 2.
    Row row{o.level, std::vector<double>(n_alpha_, 0.0), 0.0, o.value, o.weight};
    for (std::size_t s : obs.slots(o)) {
      row.offset += basis.mean(static_cast<Eigen::Index>(s));
      for (std::size_t i = 0; i < n_alpha_; ++i) {
        const double b = basis.modes(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i));
        const double half = 0.5 * normalizer.range(i);
        row.coeff[i] += b * half;
        row.offset += b * (normalizer.lo()[i] + half);
      }
    }
    by_level_[o.level].push_back(rows_.size());
    rows_.push_back(std::move(row));
  }
}

std::span<const std::size_t> ObservationOperator::at_level(std::size_t k) const {
  if (k >= by_level_.size()) return {};
  return by_level_[k];
}

double ObservationOperator::weight_sum(std::size_t begin, std::size_t end) const {
  double s = 0.0;
  for (std::size_t k = begin; k < end && k < by_level_.size(); ++k) {
    for (std::size_t i : by_level_[k]) s += rows_[i].weight;
  }
  return s;
}

double ObservationOperator::total_weight() const {
  double s = 0.0;
  for (const auto& r : rows_) s += r.weight;
  return s;
}

double ObservationOperator::predict(const Row& row, std::span<const double> alpha) const {
  double v = row.offset;
  for (std::size_t i = 0; i < n_alpha_; ++i) v += row.coeff[i] * alpha[i];
  return v;
}

Mismatch trajectory_mismatch(const ObservationOperator& op,
                             const std::vector<std::vector<double>>& alpha) {
  Mismatch m;
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    for (std::size_t i : op.at_level(k)) {
      const auto& row = op.rows()[i];
      if (row.weight <= 0.0) continue;
      const double r = op.predict(row, alpha[k]) - row.value;
      m.sum += r * r;
      ++m.count;
    }
  }
  return m;
}

}  // namespace predgan::da
