#pragma once

#include "safecmdp/cmdp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace safecmdp {

struct Cell {
    int row = 0;
    int col = 0;
    friend bool operator==(const Cell&, const Cell&) = default;
};

/// How the probability of not moving as intended is spread over directions.
enum class SlipModel {
    OtherDirections,  // split uniformly over the three non-chosen directions
    AllDirections,    // split uniformly over all four directions
};

/**
 * Gridworld with one absorbing goal and two constraint regions.
 *
 * The default layout is a reconstruction: goal top-right, a signal-1 strip on
 * row 1 (columns 0-3), a signal-2 strip on row 3 (columns 2-5), start at the
 * bottom-left.
 */
struct GridworldSpec {
    int width = 6;
    int height = 6;
    Cell goal{0, 5};
    Cell start{5, 0};
    std::vector<Cell> red_cells_signal1{{1, 0}, {1, 1}, {1, 2}, {1, 3}};
    std::vector<Cell> red_cells_signal2{{3, 2}, {3, 3}, {3, 4}, {3, 5}};
    double slip_prob = 0.1;
    SlipModel slip_model = SlipModel::OtherDirections;
    double penalty = -10.0;
    double goal_reward = 1.0;
    double discount = 0.7;
    std::array<double, 2> thresholds{-2.0, -2.0};
    /// Divide utilities and thresholds by |penalty| so every signal is bounded by 1.
    bool normalize = false;
};

/// Action encoding: 0 = up, 1 = right, 2 = down, 3 = left.
inline constexpr std::array<std::pair<int, int>, 4> kGridMoves{{{-1, 0}, {0, 1}, {1, 0}, {0, -1}}};

inline std::size_t cell_index(const GridworldSpec& g, Cell c) {
    return static_cast<std::size_t>(c.row * g.width + c.col);
}

inline void validate(const GridworldSpec& g) {
    if (g.width < 1 || g.height < 1) throw ModelError("gridworld dimensions must be positive");
    auto inside = [&](Cell c) {
        return c.row >= 0 && c.row < g.height && c.col >= 0 && c.col < g.width;
    };
    auto where = [](Cell c) {
        return "(" + std::to_string(c.row) + "," + std::to_string(c.col) + ")";
    };
    if (!inside(g.goal)) throw ModelError("goal cell " + where(g.goal) + " outside the grid");
    if (!inside(g.start)) throw ModelError("start cell " + where(g.start) + " outside the grid");
    for (const auto* list : {&g.red_cells_signal1, &g.red_cells_signal2})
        for (Cell c : *list) {
            if (!inside(c)) throw ModelError("red cell " + where(c) + " outside the grid");
            if (c == g.goal) throw ModelError("red cell " + where(c) + " coincides with the goal");
        }
    if (!(g.slip_prob >= 0.0 && g.slip_prob < 1.0)) throw ModelError("slip_prob must be in [0,1)");
    if (!(g.discount > 0.0 && g.discount < 1.0)) throw ModelError("discount out of (0,1)");
    if (g.normalize && g.penalty == 0.0)
        throw ModelError("normalize requires a nonzero penalty");
}

/// Builds the 3-signal CMDP (objective, two constraint utilities).
inline TabularCmdp build_gridworld(const GridworldSpec& g) {
    validate(g);
    TabularCmdp m;
    const std::size_t S = static_cast<std::size_t>(g.width * g.height);
    const std::size_t A = kGridMoves.size();
    m.num_states = S;
    m.num_actions = A;
    m.discount = g.discount;
    m.transition.assign(S * A * S, 0.0);
    m.initial_dist.assign(S, 0.0);
    m.initial_dist[cell_index(g, g.start)] = 1.0;

    const std::size_t goal = cell_index(g, g.goal);
    auto step = [&](int r, int c, std::size_t dir) {
        const int nr = r + kGridMoves[dir].first, nc = c + kGridMoves[dir].second;
        if (nr < 0 || nr >= g.height || nc < 0 || nc >= g.width) return r * g.width + c;
        return nr * g.width + nc;
    };
    for (int r = 0; r < g.height; ++r)
        for (int c = 0; c < g.width; ++c) {
            const auto s = static_cast<std::size_t>(r * g.width + c);
            for (std::size_t a = 0; a < A; ++a) {
                double* row = &m.transition[(s * A + a) * S];
                if (s == goal) {
                    row[s] = 1.0;
                    continue;
                }
                for (std::size_t dir = 0; dir < A; ++dir) {
                    double p;
                    if (g.slip_model == SlipModel::OtherDirections)
                        p = dir == a ? 1.0 - g.slip_prob : g.slip_prob / 3.0;
                    else
                        p = (dir == a ? 1.0 - g.slip_prob : 0.0) + g.slip_prob / 4.0;
                    row[static_cast<std::size_t>(step(r, c, dir))] += p;
                }
            }
        }

    const double scale = g.normalize ? 1.0 / std::abs(g.penalty) : 1.0;
    m.rewards.assign(3, std::vector<double>(S * A, 0.0));
    for (std::size_t a = 0; a < A; ++a) m.rewards[0][goal * A + a] = g.goal_reward;
    for (Cell cell : g.red_cells_signal1)
        for (std::size_t a = 0; a < A; ++a)
            m.rewards[1][cell_index(g, cell) * A + a] = g.penalty * scale;
    for (Cell cell : g.red_cells_signal2)
        for (std::size_t a = 0; a < A; ++a)
            m.rewards[2][cell_index(g, cell) * A + a] = g.penalty * scale;

    m.reward_bounds.resize(3);
    for (std::size_t i = 0; i < 3; ++i) {
        double b = 0.0;
        for (double r : m.rewards[i]) b = std::max(b, std::abs(r));
        m.reward_bounds[i] = b > 0.0 ? b : 1.0;
    }
    m.thresholds = {g.thresholds[0] * scale, g.thresholds[1] * scale};
    return m;
}

}  // namespace safecmdp
