/*
 * Copyright 2026 The coalition-cdn Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef COALITION_CDN_METRICS_HPP
#define COALITION_CDN_METRICS_HPP

#include <coalition_cdn/ids.hpp>

#include <cstddef>
#include <map>
#include <string_view>

namespace coalition_cdn {

enum class Phase
{
	random,
	game
};

constexpr std::string_view to_string(Phase p) noexcept
{
	return p == Phase::random ? "random" : "game";
}

/// Quality and load figures for one measurement window of one run.
struct MetricsRecord
{
	std::size_t n_clients{0};
	std::size_t replica{0};
	Phase phase{Phase::random};

	double mean_bitrate_kbps{0};
	double mean_level_index{0};
	std::map<ServerId, std::size_t> per_server_counts;

	/// Game phase only.
	std::size_t transfers{0};

	std::size_t rebuffer_events{0};
	double rebuffer_time_s{0};

	/// Number of segment samples behind the means.
	std::size_t samples{0};
};

} // namespace coalition_cdn

#endif // COALITION_CDN_METRICS_HPP
