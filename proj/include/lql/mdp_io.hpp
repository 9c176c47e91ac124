#pragma once

#include <string>

#include "lql/mdp.hpp"

#include <json.hpp>

namespace lql {

// Flattened row-major layout: transition indexed (s, a, s'), reward (s, a).
inline std::string mdp_to_json(const MDPSpec& mdp) {
    nlohmann::json j;
    j["num_states"] = mdp.num_states;
    j["num_actions"] = mdp.num_actions;
    j["transition"] = mdp.transition;
    j["reward"] = mdp.reward;
    j["terminal"] = mdp.terminal;
    j["start"] = mdp.start;
    j["gamma"] = mdp.gamma;
    j["r_max"] = mdp.r_max;
    return j.dump(2);
}

inline MDPSpec mdp_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidSpec(std::string("mdp json parse failed: ") + e.what());
    }
    MDPSpec m;
    try {
        m.num_states = j.at("num_states").get<int>();
        m.num_actions = j.at("num_actions").get<int>();
        m.transition = j.at("transition").get<std::vector<double>>();
        m.reward = j.at("reward").get<std::vector<double>>();
        m.terminal = j.at("terminal").get<std::vector<std::uint8_t>>();
        m.gamma = j.at("gamma").get<double>();
        m.r_max = j.at("r_max").get<double>();
        if (j.contains("start")) {
            m.start = j.at("start").get<std::vector<double>>();
        } else {
            m.start.assign(m.num_states, 0.0);
            if (m.num_states > 0) m.start[0] = 1.0;
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidSpec(std::string("mdp json field error: ") + e.what());
    }
    validate_spec(m);
    return m;
}

}  // namespace lql
