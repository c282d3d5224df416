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

#ifndef COALITION_CDN_HARNESS_HPP
#define COALITION_CDN_HARNESS_HPP

#include <coalition_cdn/engine.hpp>
#include <coalition_cdn/metrics.hpp>
#include <coalition_cdn/stream_sim.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

// Two-phase experiment driver: random assignment, then the game, same windows.
namespace coalition_cdn::harness {

using Kbps = game::Kbps;

struct ScenarioConfig
{
	std::vector<std::pair<ServerId, Kbps>> servers;
	sim::Ladder ladder;
	std::vector<std::size_t> client_counts;
	std::size_t replicas_per_point{1};
	std::uint64_t base_seed{0};
	Kbps xi{100};

	/// warmup_segments and measure_segments live here too. The seed field
	/// is ignored; every run derives its own.
	sim::SimConfig sim;

	/// 7/5/3/1 Mbps servers, the 360p..1080p ladder, 10..90 clients, 10 replicas.
	static ScenarioConfig paper();

	void validate() const;

	friend bool operator==(ScenarioConfig const&, ScenarioConfig const&) = default;
};

/**
 * Flat `key = value` text, `#` comments, lists in brackets:
 *
 *   servers = [s1:7000, s2:5000]
 *   ladder = [1360, 3265]
 *   ladder_labels = [360p, 480p]      (optional)
 *   client_counts = [10, 20]
 *   replicas = 10
 *   seed = 1
 *   xi = 100
 *   warmup_segments = 15
 *   measure_segments = 60
 *
 * Optional simulator keys: segment_duration_s, buffer_cap_s, panic_buffer_s,
 * history_window, safety_alpha, start_spread_s. Errors name the key.
 */
ScenarioConfig parse_scenario(std::string_view text);

/// `paper` selects the built-in scenario, anything else is read as a file.
ScenarioConfig load_scenario(std::string const& path_or_name);

std::string format_scenario(ScenarioConfig const& cfg);
void write_scenario(std::filesystem::path const& path, ScenarioConfig const& cfg);

/// Stream-separated seed for one (count, replica) run.
std::uint64_t derive_seed(std::uint64_t base, std::size_t n_clients, std::size_t replica, std::uint64_t stream);

/// `c` followed by the zero-padded index, so lexical order is numeric order.
std::vector<ClientId> client_ids(std::size_t n);

struct PointResult
{
	MetricsRecord random;
	MetricsRecord game;
	std::vector<game::TransferEvent> transfers;

	/// Bitrates the game was played with.
	std::map<ClientId, Kbps> lambdas;
	sim::Diagnostics diagnostics;

	/// Over the whole run, warm-up included.
	std::size_t total_rebuffer_events{0};
};

PointResult run_point(ScenarioConfig const& cfg, std::size_t n_clients, std::size_t replica);

/// Every (count, replica) point ordered by count then replica, computed on
/// up to \a jobs threads. A failing point is rethrown with its coordinates.
std::vector<PointResult> sweep(ScenarioConfig const& cfg, std::size_t jobs = 1);

/// Both records of every point, in sweep order.
std::vector<MetricsRecord> records_of(std::vector<PointResult> const& points);

struct Summary
{
	std::string fig2;
	std::string fig3;
	std::string fig4;
};

/// Replica means and sample standard deviations (0 for a single replica).
Summary summarize(std::vector<MetricsRecord> const& records, ScenarioConfig const& cfg);

std::string format_records(std::vector<MetricsRecord> const& records, ScenarioConfig const& cfg);
std::string format_transfers(std::vector<PointResult> const& points);

/// Sweeps and writes fig2.csv, fig3.csv, fig4.csv, records.csv and transfers.log into \a out.
std::vector<PointResult> run_experiment(ScenarioConfig const& cfg, std::filesystem::path const& out,
                                        std::size_t jobs = 1);

} // namespace coalition_cdn::harness

#endif // COALITION_CDN_HARNESS_HPP
