// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string_view>

namespace vcal::elicitation::detail {

// Single-user-message layout; each holds one $text placeholder.
extern const std::string_view kSingleUser_imdb;
extern const std::string_view kSingleUser_emotion;
extern const std::string_view kSingleUser_massive;

// System messages for the system + user layout (user content is "$text").
extern const std::string_view kSystem_imdb;
extern const std::string_view kSystem_emotion;
extern const std::string_view kSystem_massive;

}  // namespace vcal::elicitation::detail
