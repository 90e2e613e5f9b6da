#include "altirl/environments.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace altirl {

int RandomMgConfig::resolved_reward_count() const {
  if (reward_count) return *reward_count;
  return static_cast<int>(std::ceil(0.1 * num_states * num_actions));
}

void RandomMgConfig::validate() const {
  if (num_states < 1 || num_actions < 1 || num_players < 1) throw std::invalid_argument("game sizes must be positive");
  if (num_agents < num_players) throw std::invalid_argument("need at least as many agents as players");
  if (!(dirichlet_alpha > 0.0)) throw std::invalid_argument("dirichlet_alpha must be positive");
  if (!(discount >= 0.0 && discount < 1.0)) throw std::invalid_argument("discount must lie in [0, 1)");
  if (!(bounds.lambda_min <= bounds.lambda_max)) throw std::invalid_argument("empty altruism range");
  const int count = resolved_reward_count();
  if (count < 0 || count > num_states * num_actions) {
    throw std::invalid_argument("reward count exceeds the number of state-action pairs");
  }
}

Eigen::VectorXd sample_dirichlet(int size, double alpha, Rng& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  Eigen::VectorXd w(size);
  double total = 0.0;
  while (!(total > 0.0)) {
    for (int k = 0; k < size; ++k) w(k) = gamma(rng);
    total = w.sum();
  }
  return w / total;
}

RandomMg generate_random_mg(const RandomMgConfig& cfg) {
  cfg.validate();
  const JointActionCodec codec(cfg.num_actions, cfg.num_players);
  const Index rows = static_cast<Index>(cfg.num_states) * codec.size();

  Rng rng(derive_seed(cfg.seed, {stream_tag("transitions")}));
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(rows * cfg.num_states));
  for (Index r = 0; r < rows; ++r) {
    const Eigen::VectorXd p = sample_dirichlet(cfg.num_states, cfg.dirichlet_alpha, rng);
    for (int s = 0; s < cfg.num_states; ++s) {
      if (p(s) > 0.0) triplets.emplace_back(r, s, p(s));
    }
  }
  SparseMatrix transition(rows, cfg.num_states);
  transition.setFromTriplets(triplets.begin(), triplets.end());
  transition.makeCompressed();

  RandomMg out;
  out.game = RewardlessGame(cfg.num_states, cfg.num_actions, cfg.num_players, std::move(transition), cfg.discount,
                            Eigen::VectorXd::Constant(cfg.num_states, 1.0 / cfg.num_states));

  const int pairs = cfg.num_states * cfg.num_actions;
  const int count = cfg.resolved_reward_count();
  for (int i = 0; i < cfg.num_agents; ++i) {
    Rng agent_rng(derive_seed(cfg.seed, {stream_tag("agent"), static_cast<std::uint64_t>(i)}));
    std::vector<int> order(static_cast<std::size_t>(pairs));
    std::iota(order.begin(), order.end(), 0);
    for (int k = 0; k < count; ++k) {
      const int pick = k + static_cast<int>(uniform01(agent_rng) * (pairs - k));
      std::swap(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(std::min(pick, pairs - 1))]);
    }
    AltruismProfile profile;
    profile.intrinsic = Eigen::MatrixXd::Constant(cfg.num_states, cfg.num_actions, cfg.bounds.r_min);
    for (int k = 0; k < count; ++k) {
      const int flat = order[static_cast<std::size_t>(k)];
      profile.intrinsic(flat / cfg.num_actions, flat % cfg.num_actions) = cfg.bounds.r_max;
    }
    profile.altruism =
        cfg.bounds.lambda_min + (cfg.bounds.lambda_max - cfg.bounds.lambda_min) * uniform01(agent_rng);
    out.profiles.push_back(std::move(profile));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Kitchen layout

Tile KitchenLayout::at(Cell c) const {
  if (c.row < 0 || c.row >= rows || c.col < 0 || c.col >= cols) return Tile::wall;
  return tiles[static_cast<std::size_t>(c.row * cols + c.col)];
}

std::string KitchenLayout::to_string() const {
  std::string out;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      out.push_back(Cell{r, c} == start_cell ? 'S' : static_cast<char>(at({r, c})));
    }
    out.push_back('\n');
  }
  return out;
}

namespace {

constexpr std::array<Cell, 4> kMoves{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};

Cell offset(Cell c, int direction) {
  return {c.row + kMoves[static_cast<std::size_t>(direction)].row, c.col + kMoves[static_cast<std::size_t>(direction)].col};
}

}  // namespace

void KitchenLayout::validate() const {
  if (rows < 1 || cols < 1 || tiles.size() != static_cast<std::size_t>(rows * cols)) {
    throw std::invalid_argument("layout grid is empty or ragged");
  }
  if (!walkable(start_cell)) throw std::invalid_argument("start cell must be floor");
  const auto count = [&](Tile t) { return std::count(tiles.begin(), tiles.end(), t); };
  if (count(Tile::pot) != 1) throw std::invalid_argument("layout needs exactly one pot");
  if (count(Tile::tomato_stand) < 1 || count(Tile::plate_stand) < 1) {
    throw std::invalid_argument("layout needs a tomato stand and a plate stand");
  }
  if (count(Tile::delivery) < 1) throw std::invalid_argument("layout needs a delivery tile");
  if (count(Tile::table) > 1) throw std::invalid_argument("layout supports at most one table");

  std::vector<char> seen(tiles.size(), 0);
  std::deque<Cell> queue{start_cell};
  seen[static_cast<std::size_t>(start_cell.row * cols + start_cell.col)] = 1;
  std::vector<char> touched(tiles.size(), 0);
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    for (int d = 0; d < 4; ++d) {
      const Cell n = offset(c, d);
      if (n.row < 0 || n.row >= rows || n.col < 0 || n.col >= cols) continue;
      const auto flat = static_cast<std::size_t>(n.row * cols + n.col);
      touched[flat] = 1;
      if (walkable(n) && !seen[flat]) {
        seen[flat] = 1;
        queue.push_back(n);
      }
    }
  }
  for (std::size_t k = 0; k < tiles.size(); ++k) {
    if (tiles[k] == Tile::floor && !seen[k]) throw std::invalid_argument("walkable region is not connected");
    if (tiles[k] != Tile::floor && tiles[k] != Tile::wall && !touched[k]) {
      throw std::invalid_argument("an interactive tile is not adjacent to reachable floor");
    }
  }
}

KitchenLayout parse_layout(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw std::invalid_argument("layout is empty");

  KitchenLayout out;
  out.rows = static_cast<int>(lines.size());
  out.cols = static_cast<int>(lines.front().size());
  int starts = 0;
  for (int r = 0; r < out.rows; ++r) {
    const std::string& line = lines[static_cast<std::size_t>(r)];
    if (static_cast<int>(line.size()) != out.cols) throw std::invalid_argument("layout rows differ in width");
    for (int c = 0; c < out.cols; ++c) {
      const char ch = line[static_cast<std::size_t>(c)];
      switch (ch) {
        case 'S':
          out.start_cell = {r, c};
          ++starts;
          out.tiles.push_back(Tile::floor);
          break;
        case '#': case '.': case 'T': case 'P': case 'O': case 'B': case 'D':
          out.tiles.push_back(static_cast<Tile>(ch));
          break;
        default:
          throw std::invalid_argument(std::string("unknown layout character '") + ch + "'");
      }
    }
  }
  if (starts != 1) throw std::invalid_argument("layout needs exactly one start cell");
  out.validate();
  return out;
}

KitchenLayout load_layout(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open layout file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_layout(text.str());
}

// ---------------------------------------------------------------------------
// Kitchen dynamics

KitchenState KitchenState::swapped() const {
  KitchenState out = *this;
  std::swap(out.cell[0], out.cell[1]);
  std::swap(out.carry[0], out.carry[1]);
  return out;
}

struct KitchenCodec::Interaction {
  enum Kind { none, take_tomato, take_plate, cook, take_soup, place_table, take_table, deliver };
  Kind kind = none;
  int target = -1;
};

KitchenCodec::Interaction KitchenCodec::resolve_interaction(const KitchenState& s, int player) const {
  const Cell here = cell_of(s.cell[static_cast<std::size_t>(player)]);
  const Carry hand = s.carry[static_cast<std::size_t>(player)];
  for (int d = 0; d < 4; ++d) {
    const Cell n = offset(here, d);
    const int target = n.row * layout_.cols + n.col;
    Interaction::Kind kind = Interaction::none;
    switch (layout_.at(n)) {
      case Tile::tomato_stand:
        if (hand == Carry::nothing) kind = Interaction::take_tomato;
        break;
      case Tile::plate_stand:
        if (hand == Carry::nothing) kind = Interaction::take_plate;
        break;
      case Tile::pot:
        if (hand == Carry::tomato && !s.pot_ready) kind = Interaction::cook;
        if (hand == Carry::plate && s.pot_ready) kind = Interaction::take_soup;
        break;
      case Tile::table:
        if ((hand == Carry::tomato || hand == Carry::plate) && s.table == Carry::nothing) kind = Interaction::place_table;
        if (hand == Carry::nothing && s.table != Carry::nothing) kind = Interaction::take_table;
        break;
      case Tile::delivery:
        if (hand == Carry::soup) kind = Interaction::deliver;
        break;
      default:
        break;
    }
    if (kind != Interaction::none) return {kind, target};
  }
  return {};
}

KitchenStep KitchenCodec::step(const KitchenState& s, int action0, int action1) const {
  const std::array<int, 2> actions{action0, action1};
  for (const int a : actions) {
    if (a < 0 || a >= kKitchenActions) throw std::out_of_range("kitchen action out of range");
  }
  KitchenStep out;
  out.next = s;

  std::array<Interaction, 2> use{};
  for (int i = 0; i < 2; ++i) {
    if (actions[static_cast<std::size_t>(i)] == interact) use[static_cast<std::size_t>(i)] = resolve_interaction(s, i);
  }
  if (use[0].kind != Interaction::none && use[0].target == use[1].target) {
    const Tile t = layout_.at(cell_of(use[0].target));
    if (t == Tile::pot || t == Tile::table) use[0] = use[1] = Interaction{};
  }
  for (int i = 0; i < 2; ++i) {
    const auto is = static_cast<std::size_t>(i);
    Carry& hand = out.next.carry[is];
    switch (use[is].kind) {
      case Interaction::take_tomato: hand = Carry::tomato; break;
      case Interaction::take_plate: hand = Carry::plate; break;
      case Interaction::cook:
        hand = Carry::nothing;
        out.next.pot_ready = true;
        out.events.cooked[is] = true;
        break;
      case Interaction::take_soup:
        hand = Carry::soup;
        out.next.pot_ready = false;
        break;
      case Interaction::place_table:
        out.next.table = hand;
        hand = Carry::nothing;
        break;
      case Interaction::take_table:
        hand = s.table;
        out.next.table = Carry::nothing;
        break;
      case Interaction::deliver:
        hand = Carry::nothing;
        out.events.delivered[is] = true;
        break;
      case Interaction::none: break;
    }
  }

  // Moves into non-floor tiles are blocked; contested cells and swaps resolve to both staying.
  std::array<int, 2> target = s.cell;
  for (int i = 0; i < 2; ++i) {
    const auto is = static_cast<std::size_t>(i);
    if (actions[is] == interact) continue;
    const Cell n = offset(cell_of(s.cell[is]), actions[is]);
    if (layout_.walkable(n)) target[is] = n.row * layout_.cols + n.col;
  }
  const bool moving = target[0] != s.cell[0] || target[1] != s.cell[1];
  const bool contested = target[0] == target[1] && moving;
  const bool swap = s.cell[0] != s.cell[1] && target[0] == s.cell[1] && target[1] == s.cell[0];
  if (!contested && !swap) out.next.cell = target;
  return out;
}

std::uint64_t KitchenCodec::key(const KitchenState& s) const {
  std::uint64_t k = static_cast<std::uint64_t>(s.cell[0]);
  k = (k << 20) | static_cast<std::uint64_t>(s.cell[1]);
  k = (k << 2) | static_cast<std::uint64_t>(s.carry[0]);
  k = (k << 2) | static_cast<std::uint64_t>(s.carry[1]);
  k = (k << 1) | static_cast<std::uint64_t>(s.pot_ready);
  k = (k << 2) | static_cast<std::uint64_t>(s.table);
  return k;
}

KitchenCodec::KitchenCodec(KitchenLayout layout) : layout_(std::move(layout)) {
  layout_.validate();
  KitchenState start;
  const int flat = layout_.start_cell.row * layout_.cols + layout_.start_cell.col;
  start.cell = {flat, flat};
  states_.push_back(start);
  lookup_.emplace(key(start), 0);
  for (std::size_t head = 0; head < states_.size(); ++head) {
    const KitchenState s = states_[head];
    for (int a0 = 0; a0 < kKitchenActions; ++a0) {
      for (int a1 = 0; a1 < kKitchenActions; ++a1) {
        const KitchenState next = step(s, a0, a1).next;
        if (lookup_.emplace(key(next), static_cast<int>(states_.size())).second) states_.push_back(next);
      }
    }
  }
}

int KitchenCodec::index(const KitchenState& state) const {
  const auto it = lookup_.find(key(state));
  return it == lookup_.end() ? -1 : it->second;
}

int KitchenCodec::swapped_index(int state) const {
  const int out = index(this->state(state).swapped());
  if (out < 0) throw std::logic_error("reachable set is not closed under the player swap");
  return out;
}

bool KitchenCodec::would_cook(int state, int action, int player) const {
  return action == interact && resolve_interaction(this->state(state), player).kind == Interaction::cook;
}

bool KitchenCodec::would_deliver(int state, int action, int player) const {
  return action == interact && resolve_interaction(this->state(state), player).kind == Interaction::deliver;
}

bool KitchenCodec::cooked(int state, int action0, int action1, int player) const {
  return step(state, action0, action1).events.cooked[static_cast<std::size_t>(player)];
}

bool KitchenCodec::delivered(int state, int action0, int action1, int player) const {
  return step(state, action0, action1).events.delivered[static_cast<std::size_t>(player)];
}

std::string KitchenCodec::manifest_json() const {
  static constexpr const char* kCarry[] = {"nothing", "plate", "tomato", "soup"};
  nlohmann::json doc;
  doc["layout"] = layout_.to_string();
  doc["num_states"] = size();
  doc["actions"] = {"up", "down", "left", "right", "interact"};
  auto& states = doc["states"] = nlohmann::json::array();
  for (int k = 0; k < size(); ++k) {
    const KitchenState& s = state(k);
    nlohmann::json players = nlohmann::json::array();
    for (int i = 0; i < 2; ++i) {
      const Cell c = cell_of(s.cell[static_cast<std::size_t>(i)]);
      players.push_back({{"row", c.row}, {"col", c.col}, {"carry", kCarry[static_cast<int>(s.carry[static_cast<std::size_t>(i)])]}});
    }
    states.push_back({{"index", k},
                      {"players", players},
                      {"pot", s.pot_ready ? "ready" : "empty"},
                      {"table", kCarry[static_cast<int>(s.table)]}});
  }
  return doc.dump(1);
}

Kitchen build_kitchen(const KitchenLayout& layout, double discount) {
  KitchenCodec codec(layout);
  const int num_states = codec.size();
  const Index joints = kKitchenActions * kKitchenActions;
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(num_states * joints));
  for (int s = 0; s < num_states; ++s) {
    for (int a0 = 0; a0 < kKitchenActions; ++a0) {
      for (int a1 = 0; a1 < kKitchenActions; ++a1) {
        triplets.emplace_back(s * joints + a0 * kKitchenActions + a1, codec.index(codec.step(s, a0, a1).next), 1.0);
      }
    }
  }
  SparseMatrix transition(num_states * joints, num_states);
  transition.setFromTriplets(triplets.begin(), triplets.end());
  transition.makeCompressed();
  Eigen::VectorXd initial = Eigen::VectorXd::Zero(num_states);
  initial(codec.start_index()) = 1.0;

  RewardlessGame game(num_states, kKitchenActions, 2, std::move(transition), discount, std::move(initial));
  std::vector<int> identity(static_cast<std::size_t>(num_states));
  std::iota(identity.begin(), identity.end(), 0);
  std::vector<int> swap(static_cast<std::size_t>(num_states));
  for (int s = 0; s < num_states; ++s) swap[static_cast<std::size_t>(s)] = codec.swapped_index(s);
  game.set_seat_views({std::move(identity), std::move(swap)});
  return {std::move(codec), std::move(game)};
}

Eigen::MatrixXd chef_intrinsic_reward(const KitchenCodec& codec, ChefKind kind) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(codec.size(), kKitchenActions);
  for (int s = 0; s < codec.size(); ++s) {
    const bool cook = kind != ChefKind::deliver && codec.would_cook(s, interact, 0);
    const bool deliver = kind != ChefKind::cook && codec.would_deliver(s, interact, 0);
    if (cook || deliver) out(s, interact) = 1.0;
  }
  return out;
}

ChefKind parse_chef_kind(const std::string& name) {
  if (name == "deliver") return ChefKind::deliver;
  if (name == "cook") return ChefKind::cook;
  if (name == "both") return ChefKind::both;
  throw std::invalid_argument("unknown chef kind '" + name + "'");
}

std::string to_string(ChefKind kind) {
  switch (kind) {
    case ChefKind::deliver: return "deliver";
    case ChefKind::cook: return "cook";
    case ChefKind::both: return "both";
  }
  return "both";
}

}  // namespace altirl
