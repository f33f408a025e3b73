#pragma once

// Enum <-> string JSON conversion that rejects unknown strings instead of
// silently mapping them to the first enumerator.

#include "owl/types.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <utility>

#define OWL_JSON_ENUM(E, ...)                                                              \
    inline void to_json(nlohmann::json& j, const E& e) {                                   \
        static const std::pair<E, const char*> table[] = __VA_ARGS__;                      \
        for (const auto& [value, name] : table)                                            \
            if (value == e) {                                                              \
                j = name;                                                                  \
                return;                                                                    \
            }                                                                              \
        throw ::owl::InvalidArgument("invalid " #E " value");                              \
    }                                                                                      \
    inline void from_json(const nlohmann::json& j, E& e) {                                 \
        static const std::pair<E, const char*> table[] = __VA_ARGS__;                      \
        if (j.is_string())                                                                 \
            for (const auto& [value, name] : table)                                        \
                if (j.get_ref<const std::string&>() == name) {                             \
                    e = value;                                                             \
                    return;                                                                \
                }                                                                          \
        throw ::owl::InvalidArgument("invalid " #E ": " + j.dump());                       \
    }
