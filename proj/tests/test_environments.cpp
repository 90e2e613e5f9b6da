#include <cmath>
#include <string>

#include "doctest.h"
#include <json.hpp>

#include "altirl/environments.hpp"
#include "support.hpp"

using namespace altirl;

namespace {

KitchenLayout reference_layout() { return load_layout(std::string(ALTIRL_DATA_DIR) + "/layouts/reference.txt"); }
KitchenLayout reduced_layout() { return load_layout(std::string(ALTIRL_DATA_DIR) + "/layouts/reduced.txt"); }

int flat(const KitchenLayout& layout, int row, int col) { return row * layout.cols + col; }

}  // namespace

TEST_CASE("random Markov game generation") {
  RandomMgConfig cfg;
  cfg.num_states = 6;
  cfg.num_actions = 3;
  cfg.num_players = 2;
  cfg.num_agents = 4;
  cfg.seed = 11;
  const RandomMg mg = generate_random_mg(cfg);

  SUBCASE("rows are distributions") {
    const Eigen::VectorXd sums = mg.game.transition() * Eigen::VectorXd::Ones(cfg.num_states);
    CHECK(sums.size() == 6 * 9);
    CHECK((sums.array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(mg.game.transition().coeffs().minCoeff() >= 0.0);
  }

  SUBCASE("sparse intrinsic rewards") {
    CHECK(cfg.resolved_reward_count() == 2);
    for (const auto& p : mg.profiles) {
      CHECK((p.intrinsic.array() == 1.0).count() == 2);
      CHECK((p.intrinsic.array() == 0.0).count() == 16);
      CHECK(p.altruism >= -5.0);
      CHECK(p.altruism <= 5.0);
    }
  }

  SUBCASE("bit-reproducible per seed") {
    const RandomMg again = generate_random_mg(cfg);
    const SparseMatrix diff = again.game.transition() - mg.game.transition();
    CHECK(diff.norm() == 0.0);
    for (std::size_t i = 0; i < mg.profiles.size(); ++i) {
      CHECK(again.profiles[i].intrinsic == mg.profiles[i].intrinsic);
      CHECK(again.profiles[i].altruism == mg.profiles[i].altruism);
    }
    RandomMgConfig other = cfg;
    other.seed = 12;
    CHECK((generate_random_mg(other).game.transition() - mg.game.transition()).norm() > 0.0);
  }

  SUBCASE("agent streams do not depend on the agent count") {
    RandomMgConfig more = cfg;
    more.num_agents = 6;
    const RandomMg bigger = generate_random_mg(more);
    for (std::size_t i = 0; i < mg.profiles.size(); ++i) {
      CHECK(bigger.profiles[i].intrinsic == mg.profiles[i].intrinsic);
      CHECK(bigger.profiles[i].altruism == mg.profiles[i].altruism);
    }
  }

  SUBCASE("errors") {
    RandomMgConfig bad = cfg;
    bad.reward_count = 19;
    CHECK_THROWS_AS(generate_random_mg(bad), std::invalid_argument);
    bad = cfg;
    bad.num_agents = 1;
    CHECK_THROWS_AS(generate_random_mg(bad), std::invalid_argument);
    bad = cfg;
    bad.dirichlet_alpha = 0.0;
    CHECK_THROWS_AS(generate_random_mg(bad), std::invalid_argument);
  }
}

TEST_CASE("altruism draws match the moments of U(-5, 5)") {
  RandomMgConfig cfg;
  cfg.num_states = 2;
  cfg.num_actions = 2;
  cfg.num_agents = 10000;
  cfg.seed = 3;
  const RandomMg mg = generate_random_mg(cfg);
  double mean = 0.0;
  for (const auto& p : mg.profiles) mean += p.altruism;
  mean /= cfg.num_agents;
  double var = 0.0;
  for (const auto& p : mg.profiles) var += (p.altruism - mean) * (p.altruism - mean);
  var /= cfg.num_agents - 1;
  // Standard errors: sqrt(25/3 / n) for the mean, sqrt((125 - (25/3)^2) / n) for the variance.
  const double n = cfg.num_agents;
  CHECK(std::abs(mean) < 3.0 * std::sqrt(25.0 / 3.0 / n));
  CHECK(std::abs(var - 100.0 / 12.0) < 3.0 * std::sqrt((125.0 - 625.0 / 9.0) / n));
}

TEST_CASE("small Dirichlet concentration gives peakier rows") {
  const auto mean_row_max = [](double alpha) {
    RandomMgConfig cfg;
    cfg.num_states = 10;
    cfg.num_actions = 2;
    cfg.dirichlet_alpha = alpha;
    cfg.seed = 5;
    const RandomMg mg = generate_random_mg(cfg);
    const Eigen::MatrixXd dense = Eigen::MatrixXd(mg.game.transition());
    return dense.rowwise().maxCoeff().mean();
  };
  CHECK(mean_row_max(0.3) > mean_row_max(10.0));
}

TEST_CASE("layout parsing") {
  const KitchenLayout ref = reference_layout();
  CHECK(ref.rows == 5);
  CHECK(ref.cols == 7);
  CHECK(ref.start_cell == Cell{2, 1});
  CHECK(ref.at({1, 4}) == Tile::pot);
  CHECK(ref.at({2, 3}) == Tile::table);
  CHECK(ref.at({-1, 0}) == Tile::wall);
  CHECK(parse_layout(ref.to_string()).tiles == ref.tiles);

  CHECK_THROWS_AS(parse_layout("#TOP#\nB.S.X\n#####\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_layout("#TOP#\nB...D\n#####\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_layout("#TOO#\nBPS.D\n#####\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_layout("#TOP#\nB.S#.D\n#####\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_layout("#TOP##\nB.S#.D\n######\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_layout("#TO##\nB.S.D\n#####\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_layout(""), std::invalid_argument);
}

TEST_CASE("kitchen dynamics") {
  const KitchenLayout layout = reference_layout();
  const Kitchen kitchen = build_kitchen(layout);
  const KitchenCodec& codec = kitchen.codec;

  SUBCASE("transitions are one-hot") {
    const SparseMatrix& t = kitchen.game.transition();
    CHECK(t.rows() == codec.size() * 25);
    CHECK(t.nonZeros() == t.rows());
    CHECK((t * Eigen::VectorXd::Ones(codec.size())).isOnes(0.0));
    CHECK(kitchen.game.initial_dist()(codec.start_index()) == 1.0);
  }

  SUBCASE("players overlap only at the start cell") {
    const int start = flat(layout, 2, 1);
    for (int s = 0; s < codec.size(); ++s) {
      const KitchenState& st = codec.state(s);
      if (st.cell[0] == st.cell[1]) CHECK(st.cell[0] == start);
    }
  }

  SUBCASE("walls, contested cells and swaps") {
    KitchenState s;
    s.cell = {flat(layout, 3, 1), flat(layout, 3, 3)};
    CHECK(codec.step(s, down, down).next.cell == s.cell);
    CHECK(codec.step(s, right, left).next.cell == s.cell);
    s.cell = {flat(layout, 3, 1), flat(layout, 3, 2)};
    CHECK(codec.step(s, right, left).next.cell == s.cell);
    CHECK(codec.step(s, right, right).next.cell == std::array<int, 2>{flat(layout, 3, 2), flat(layout, 3, 3)});
    CHECK(codec.step(s, right, interact).next.cell == s.cell);
    s.cell = {flat(layout, 2, 1), flat(layout, 2, 1)};
    CHECK(codec.step(s, right, right).next.cell == s.cell);
    CHECK(codec.step(s, right, down).next.cell == std::array<int, 2>{flat(layout, 2, 2), flat(layout, 3, 1)});
  }

  SUBCASE("simultaneous use of the pot or table fails for both") {
    KitchenState s;
    s.cell = {flat(layout, 2, 2), flat(layout, 3, 3)};
    s.carry = {Carry::tomato, Carry::plate};
    const KitchenStep out = codec.step(s, interact, interact);
    CHECK(out.next.carry == s.carry);
    CHECK(out.next.table == Carry::nothing);
    s.carry = {Carry::tomato, Carry::nothing};
    const KitchenStep single = codec.step(s, interact, interact);
    CHECK(single.next.table == Carry::tomato);
    CHECK(single.next.carry[0] == Carry::nothing);
  }

  SUBCASE("player-permutation invariance") {
    for (int s = 0; s < codec.size(); ++s) {
      const int swapped = codec.swapped_index(s);
      for (int a0 = 0; a0 < kKitchenActions; ++a0) {
        for (int a1 = 0; a1 < kKitchenActions; ++a1) {
          const KitchenStep direct = codec.step(s, a0, a1);
          const KitchenStep mirrored = codec.step(swapped, a1, a0);
          CHECK(codec.index(direct.next.swapped()) == codec.index(mirrored.next));
          CHECK(direct.events.cooked[0] == mirrored.events.cooked[1]);
          CHECK(direct.events.delivered[1] == mirrored.events.delivered[0]);
        }
      }
    }
  }

  SUBCASE("manifest lists every state") {
    const auto doc = nlohmann::json::parse(codec.manifest_json());
    CHECK(doc["num_states"].get<int>() == codec.size());
    CHECK(doc["states"].size() == static_cast<std::size_t>(codec.size()));
    CHECK(doc["states"][0]["players"][0]["carry"] == "nothing");
  }
}

TEST_CASE("layout-derived state counts") {
  const int reference = KitchenCodec(reference_layout()).size();
  const int reduced = KitchenCodec(reduced_layout()).size();
  MESSAGE("reference layout states: " << reference << ", reduced layout states: " << reduced);
  CHECK(reduced < reference);
}

TEST_CASE("scripted pass-cook-plate-deliver trajectory") {
  const Kitchen kitchen = build_kitchen(reference_layout());
  const KitchenCodec& codec = kitchen.codec;
  // Seat 0 fetches a tomato and leaves it on the table; seat 1 takes it, cooks, plates and delivers.
  const std::vector<std::array<int, 2>> script{
      {interact, down}, {right, right}, {interact, right}, {left, interact}, {up, right},
      {up, up},         {up, interact}, {up, right},       {up, interact},   {up, left},
      {up, interact},   {up, right},    {up, interact}};
  const Eigen::MatrixXd both = chef_intrinsic_reward(codec, ChefKind::both);
  const auto& seat1_view = kitchen.game.seat_views()[1];

  int s = codec.start_index();
  int cooks = 0;
  int deliveries = 0;
  double seat1_reward = 0.0;
  double seat0_reward = 0.0;
  for (const auto& joint : script) {
    seat0_reward += both(s, joint[0]);
    seat1_reward += both(seat1_view[static_cast<std::size_t>(s)], joint[1]);
    const KitchenStep out = codec.step(s, joint[0], joint[1]);
    cooks += out.events.cooked[0] + out.events.cooked[1];
    deliveries += out.events.delivered[0] + out.events.delivered[1];
    CHECK(out.events.cooked[1] == codec.cooked(s, joint[0], joint[1], 1));
    s = codec.index(out.next);
    REQUIRE(s >= 0);
  }
  CHECK(script.size() == 13);
  CHECK(cooks == 1);
  CHECK(deliveries == 1);
  CHECK(seat1_reward == 2.0);
  CHECK(seat0_reward == 0.0);
  const KitchenState& last = codec.state(s);
  CHECK(last.carry == std::array<Carry, 2>{Carry::nothing, Carry::nothing});
  CHECK_FALSE(last.pot_ready);
  CHECK(last.table == Carry::nothing);
}

TEST_CASE("chef intrinsic rewards") {
  const Kitchen kitchen = build_kitchen(reduced_layout());
  const KitchenCodec& codec = kitchen.codec;
  CHECK(codec.size() <= 600);
  const Eigen::MatrixXd deliver = chef_intrinsic_reward(codec, ChefKind::deliver);
  const Eigen::MatrixXd cook = chef_intrinsic_reward(codec, ChefKind::cook);
  const Eigen::MatrixXd both = chef_intrinsic_reward(codec, ChefKind::both);
  CHECK(both == deliver.cwiseMax(cook));
  CHECK(deliver.cwiseProduct(cook).sum() == 0.0);
  CHECK(deliver.leftCols(interact).isZero(0.0));
  CHECK(deliver.sum() > 0.0);
  CHECK(cook.sum() > 0.0);

  const KitchenLayout& layout = codec.layout();
  for (int s = 0; s < codec.size(); ++s) {
    const KitchenState& st = codec.state(s);
    const Cell here = codec.cell_of(st.cell[0]);
    bool near_delivery = false;
    for (const Cell d : {Cell{-1, 0}, Cell{1, 0}, Cell{0, -1}, Cell{0, 1}}) {
      near_delivery |= layout.at({here.row + d.row, here.col + d.col}) == Tile::delivery;
    }
    CHECK((deliver(s, interact) == 1.0) == (near_delivery && st.carry[0] == Carry::soup));
  }

  CHECK(parse_chef_kind(to_string(ChefKind::cook)) == ChefKind::cook);
  CHECK_THROWS_AS(parse_chef_kind("waiter"), std::invalid_argument);
}
