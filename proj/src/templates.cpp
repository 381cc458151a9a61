// SPDX-License-Identifier: Apache-2.0
// Built-in prompt templates, reproduced character for character.
#include "templates.hpp"

namespace vcal::elicitation::detail {

const std::string_view kSingleUser_imdb = R"(Give a binary sentiment label (positive or negative) to the following sentence: $text.

Assign a confidence score (between 0 and 1.0) to this prediction.

Give ONLY the probability distribution over the sentiment labels.

Give ONLY the probability, no other words or explanation.

Provide ONLY the probability in a format of Python dict.)";

const std::string_view kSingleUser_emotion = R"(Give an emotion label from a label list [sadness, joy, love, anger, fear, surprise] to the following sentence: $text.

Assign a confidence score (between 0 and 1.0) to this prediction.

Give ONLY the probability distribution over the 6 emotion labels.

Give ONLY the probability, no other words or explanation.

Provide ONLY the probability in a format of Python dict.)";

const std::string_view kSingleUser_massive = R"(Give a label from the following 60 intent labels:
["datetime_query", "iot_hue_lightchange", "transport_ticket",
 "takeaway_query", "qa_stock", "general_greet",
 "recommendation_events", "music_dislikeness", "iot_wemo_off",
 "cooking_recipe", "qa_currency", "transport_traffic",
 "general_quirky", "weather_query", "audio_volume_up",
 "email_addcontact", "takeaway_order", "email_querycontact",
 "iot_hue_lightup", "recommendation_locations",
 "play_audiobook", "lists_createoradd", "news_query",
 "alarm_query", "iot_wemo_on", "general_joke", "qa_definition",
 "social_query", "music_settings", "audio_volume_other",
 "calendar_remove", "iot_hue_lightdim", "calendar_query",
 "email_sendemail", "iot_cleaning", "audio_volume_down",
 "play_radio", "cooking_query", "datetime_convert", "qa_maths",
 "iot_hue_lightoff", "iot_hue_lighton", "transport_query",
 "music_likeness", "email_query", "play_music",
 "audio_volume_mute", "social_post", "alarm_set", "qa_factoid",
 "calendar_set", "play_game", "alarm_remove", "lists_remove",
 "transport_taxi", "recommendation_movies", "iot_coffee",
 "music_query", "play_podcasts", "lists_query"]
to the following sentence: $text.)";

const std::string_view kSystem_imdb = R"(Give a binary sentiment label (negative or positive) for a given text.
Assign a confidence score (between 0 and 1.0) to this prediction.
Give ONLY the probability distribution over the 2 sentiment labels.
Give ONLY the probability, no other words or explanation.
 Provide ONLY the probability in a format of Python dict.)";

const std::string_view kSystem_emotion = R"(Give an emotion label from a label list [sadness, joy, love, anger, fear, surprise] for a given text.
Assign a confidence score (between 0 and 1.0) to this prediction.
Give ONLY the probability distribution over the 6 emotion labels.
Give ONLY the probability, no other words or explanation.
 Provide ONLY the probability in a format of Python dict.)";

const std::string_view kSystem_massive = R"(Give a label from the following 60 intent labels ['datetime_query','iot_hue_lightchange','transport_ticket','takeaway_query', 'qa_stock','general_greet','recommendation_events','music_dislikeness', 'iot_wemo_off','cooking_recipe','qa_currency','transport_traffic', 'general_quirky','weather_query','audio_volume_up','email_addcontact', 'takeaway_order', 'email_querycontact','iot_hue_lightup', 'recommendation_locations', 'play_audiobook', 'lists_createoradd', 'news_query', 'alarm_query','iot_wemo_on', 'general_joke', 'qa_definition', 'social_query', 'music_settings', 'audio_volume_other','calendar_remove', 'iot_hue_lightdim', 'calendar_query', 'email_sendemail', 'iot_cleaning', 'audio_volume_down','play_radio', 'cooking_query', 'datetime_convert', 'qa_maths', 'iot_hue_lightoff', 'iot_hue_lighton', 'transport_query', 'music_likeness', 'email_query', 'play_music', 'audio_volume_mute', 'social_post', 'alarm_set', 'qa_factoid', 'calendar_set','play_game', 'alarm_remove', 'lists_remove', 'transport_taxi', 'recommendation_movies', 'iot_coffee', 'music_query','play_podcasts', 'lists_query'] for a given text.
Assign a confidence score (between 0 and 1.0) to this prediction.
Give ONLY the probability distribution over the 60 intent labels.
Give ONLY the probability, no other words or explanation.
 Provide ONLY the probability in a format of Python dict.)";

}  // namespace vcal::elicitation::detail
