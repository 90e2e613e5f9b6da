#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "altirl/game.hpp"
#include "altirl/rewards.hpp"

namespace altirl {

struct RandomMgConfig {
  int num_states = 10;
  int num_actions = 3;
  int num_players = 2;
  int num_agents = 4;
  double dirichlet_alpha = 0.3;
  std::optional<int> reward_count;  // entries at r_max per agent; default ceil(0.1 |S| |A|)
  double discount = 0.9;
  RewardBounds bounds;              // lambda drawn uniformly on [lambda_min, lambda_max]
  std::uint64_t seed = 0;

  int resolved_reward_count() const;
  void validate() const;
};

struct RandomMg {
  RewardlessGame game;
  std::vector<AltruismProfile> profiles;  // indexed by agent
};

// Uniform initial distribution. Bit-reproducible per seed.
RandomMg generate_random_mg(const RandomMgConfig& cfg);

// Row of Dirichlet(alpha) weights via normalized gamma draws.
Eigen::VectorXd sample_dirichlet(int size, double alpha, Rng& rng);

enum class Tile : char {
  wall = '#',
  floor = '.',
  tomato_stand = 'T',
  plate_stand = 'P',
  pot = 'O',
  table = 'B',
  delivery = 'D',
};

enum class Carry : std::uint8_t { nothing = 0, plate = 1, tomato = 2, soup = 3 };

struct Cell {
  int row = 0;
  int col = 0;
  bool operator==(const Cell&) const = default;
};

// The start marker is stored as floor plus start_cell.
struct KitchenLayout {
  int rows = 0;
  int cols = 0;
  std::vector<Tile> tiles;  // row-major
  Cell start_cell;

  Tile at(Cell c) const;
  bool walkable(Cell c) const { return at(c) == Tile::floor; }
  std::string to_string() const;
  void validate() const;  // throws std::invalid_argument
};

// Parses `#.TPOBDS` rows; trailing blank lines are ignored, rows must have equal width.
KitchenLayout parse_layout(const std::string& text);
KitchenLayout load_layout(const std::string& path);

enum KitchenAction : int { up = 0, down = 1, left = 2, right = 3, interact = 4 };
inline constexpr int kKitchenActions = 5;

struct KitchenState {
  std::array<int, 2> cell{};  // row-major cell indices
  std::array<Carry, 2> carry{Carry::nothing, Carry::nothing};
  bool pot_ready = false;
  Carry table = Carry::nothing;  // nothing, plate or tomato

  KitchenState swapped() const;
  bool operator==(const KitchenState&) const = default;
};

struct KitchenEvents {
  std::array<bool, 2> cooked{};
  std::array<bool, 2> delivered{};
};

struct KitchenStep {
  KitchenState next;
  KitchenEvents events;
};

// Reachable states of a layout, indexed in breadth-first order from the start state.
class KitchenCodec {
 public:
  explicit KitchenCodec(KitchenLayout layout);

  const KitchenLayout& layout() const { return layout_; }
  int size() const { return static_cast<int>(states_.size()); }
  const KitchenState& state(int index) const { return states_[static_cast<std::size_t>(index)]; }
  int index(const KitchenState& state) const;  // -1 if unreachable
  int start_index() const { return 0; }
  Cell cell_of(int flat) const { return {flat / layout_.cols, flat % layout_.cols}; }

  // Simultaneous step of both players.
  KitchenStep step(const KitchenState& state, int action0, int action1) const;
  KitchenStep step(int state, int action0, int action1) const { return step(this->state(state), action0, action1); }

  // Event the player's own interact would fire on its own, ignoring the partner.
  bool would_cook(int state, int action, int player) const;
  bool would_deliver(int state, int action, int player) const;

  // Events after conflict resolution for a joint action.
  bool cooked(int state, int action0, int action1, int player) const;
  bool delivered(int state, int action0, int action1, int player) const;

  // State index with the players' components exchanged.
  int swapped_index(int state) const;

  std::string manifest_json() const;

 private:
  struct Interaction;
  Interaction resolve_interaction(const KitchenState& s, int player) const;
  std::uint64_t key(const KitchenState& s) const;

  KitchenLayout layout_;
  std::vector<KitchenState> states_;
  std::unordered_map<std::uint64_t, int> lookup_;
};

struct Kitchen {
  KitchenCodec codec;
  RewardlessGame game;  // seat 1 reads intrinsic rewards through the player swap
};

Kitchen build_kitchen(const KitchenLayout& layout, double discount = 0.9);

enum class ChefKind { deliver, cook, both };

// 1 where the player's own interact fires the named event, viewed from seat 0.
Eigen::MatrixXd chef_intrinsic_reward(const KitchenCodec& codec, ChefKind kind);

ChefKind parse_chef_kind(const std::string& name);
std::string to_string(ChefKind kind);

}  // namespace altirl
