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

#ifndef COALITION_CDN_STREAM_SIM_HPP
#define COALITION_CDN_STREAM_SIM_HPP

#include <coalition_cdn/engine.hpp>
#include <coalition_cdn/ids.hpp>
#include <coalition_cdn/metrics.hpp>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

/**
 * \brief Event-driven model of DASH clients pulling segments from
 *  bandwidth-capped servers.
 *
 * Each server splits its capacity equally among the downloads in progress on
 * it. Clients pick a bitrate per segment from a harmonic-mean throughput
 * estimate, keep a playback buffer, idle while the buffer is full and stall
 * when it runs dry. Time is continuous; the loop jumps from one state change
 * to the next and re-solves shares whenever a server's download set changes.
 */
namespace coalition_cdn::sim {

using Kbps = game::Kbps;

struct Ladder
{
	std::vector<Kbps> bitrates;
	std::vector<std::string> labels;

	/// 1360/3265/6117/9330 Kbps, 360p to 1080p.
	static Ladder paper();

	/// Nonempty, strictly ascending, positive, labels parallel to bitrates.
	void validate() const;

	Kbps lowest() const { return bitrates.front(); }

	/// Position of \a bitrate in the ladder. Throws std::out_of_range when absent.
	std::size_t level_of(Kbps bitrate) const;

	friend bool operator==(Ladder const&, Ladder const&) = default;
};

struct SimConfig
{
	double segment_duration_s{2.0};
	double buffer_cap_s{30.0};
	double panic_buffer_s{2.0};
	std::size_t history_window{5};
	double safety_alpha{0.9};
	std::size_t warmup_segments{15};
	std::size_t measure_segments{60};
	std::uint64_t seed{0};

	/// Client start times are drawn uniformly from [0, start_spread_s).
	double start_spread_s{2.0};

	void validate() const;

	friend bool operator==(SimConfig const&, SimConfig const&) = default;
};

struct ServerState
{
	ServerId id;
	Kbps bandwidth_kbps{0};
	std::set<ClientId> active_downloads;
};

/// One fully downloaded segment.
struct SegmentRecord
{
	std::size_t index{0};
	Kbps bitrate_kbps{0};
	std::size_t level{0};
	ServerId server;
	double requested_at_s{0};
	double completed_at_s{0};
	double throughput_kbps{0};

	/// Stall that ended when this segment landed.
	bool stalled_before{false};
	double stall_time_s{0};
};

struct ClientState
{
	ClientId id;
	ServerId assigned_server;
	double buffer_s{0};
	std::vector<double> throughput_history;
	Kbps current_bitrate{0};
	std::size_t segments_done{0};
	std::size_t rebuffer_events{0};
	double rebuffer_time_s{0};

	std::vector<SegmentRecord> segments;

	/// Kilobits received so far, including the in-flight segment.
	double downloaded_kb{0};
};

enum class EventKind
{
	start,
	done,
	rebuffer_begin,
	rebuffer_end
};

struct SimEvent
{
	double t_s{0};
	ClientId client;
	ServerId server;
	EventKind kind{EventKind::start};
	Kbps bitrate_kbps{0};

	/// Allocated share for start, measured segment throughput for done,
	/// current share (0 when idle) for rebuffer events.
	double share_kbps{0};

	friend bool operator==(SimEvent const&, SimEvent const&) = default;
};

/// `t_s,client,server,START|DONE|REBUF_BEGIN|REBUF_END,bitrate_kbps,share_kbps`
std::string format_trace_line(SimEvent const& ev);

/// Invariant counters kept while the simulation runs.
struct Diagnostics
{
	std::size_t capacity_violations{0};
	std::size_t buffer_violations{0};

	/// Smallest share ever handed to a download (infinity before the first one).
	double min_share_kbps;

	Diagnostics();
};

/// Half-open range [first, last) of per-client segment indices.
struct SegmentWindow
{
	std::size_t first{0};
	std::size_t last{0};
};

/// Equal split of the server capacity over its active downloads.
std::map<ClientId, double> allocate_shares(ServerState const& server);

/// Harmonic mean of the last \a window samples; the lowest rung when empty.
double estimate_throughput(std::span<double const> history, std::size_t window, Ladder const& ladder);

/// Lowest rung below the panic threshold, otherwise the highest rung within alpha x estimate.
Kbps select_bitrate(double estimate_kbps, double buffer_s, Ladder const& ladder, SimConfig const& cfg);

class Simulation
{
public:
	/// \a clients pairs each client with its initial server. Start times
	/// come from std::mt19937_64(cfg.seed), one draw per client in id order.
	Simulation(std::vector<std::pair<ServerId, Kbps>> servers,
	           std::vector<std::pair<ClientId, ServerId>> clients,
	           Ladder ladder,
	           SimConfig cfg);

	double now() const noexcept { return now_; }

	/// Processes every state change up to \a until and returns the trace.
	/// Throws std::invalid_argument when \a until is before now().
	std::vector<SimEvent> advance(double until);

	/// Advances until every client has completed at least \a segments segments.
	/// Events are appended to \a trace when given.
	void run_until_segments(std::size_t segments, std::vector<SimEvent>* trace = nullptr);

	/// Moves \a client's future requests to \a server. Returns whether it changed.
	bool reassign(ClientId const& client, ServerId const& server);

	/// Index of the next segment \a client will request.
	std::size_t next_request_index(ClientId const& client) const;

	std::span<ClientState const> clients() const noexcept { return clients_; }
	std::span<ServerState const> servers() const noexcept { return servers_; }
	ClientState const& client(ClientId const& id) const;

	/// Share currently allocated to \a client's download, 0 when not downloading.
	double current_share(ClientId const& client) const;

	Ladder const& ladder() const noexcept { return ladder_; }
	SimConfig const& config() const noexcept { return cfg_; }
	Diagnostics const& diagnostics() const noexcept { return diag_; }

private:
	enum class Activity
	{
		waiting,
		downloading,
		idle
	};

	struct Flow
	{
		std::size_t server{0};
		Kbps bitrate{0};
		double remaining_kb{0};
		double requested_at{0};
		double share{0};
	};

	struct Runtime
	{
		Activity activity{Activity::waiting};
		double start_at{0};
		Flow flow;
		bool playing{false};
		bool stalled{false};
		double stall_started{0};
	};

	enum class Due
	{
		start,
		done,
		empty,
		wake
	};

	std::optional<std::pair<double, Due>> next_due(std::size_t c) const;
	void progress(double dt);
	void handle(std::size_t c, Due due, std::vector<SimEvent>* trace);
	void request(std::size_t c, std::vector<SimEvent>* trace);
	void resolve_shares(std::size_t server);
	void check_buffers();
	bool step(double until, std::vector<SimEvent>* trace);
	std::size_t client_index(ClientId const& id) const;
	std::size_t server_index(ServerId const& id) const;

	Ladder ladder_;
	SimConfig cfg_;
	std::vector<ServerState> servers_;
	std::vector<ClientState> clients_;
	std::vector<Runtime> rt_;
	double now_{0};
	Diagnostics diag_;
};

/// Each client's current bitrate, copied out.
std::map<ClientId, Kbps> snapshot_lambdas(Simulation const& sim);

/// Routes each client's next request to its server in \a col. Returns how
/// many clients changed server. Throws std::invalid_argument, leaving the
/// simulation untouched, when \a col does not cover exactly the simulated
/// clients or names an unknown server.
std::size_t apply_assignment(Simulation& sim, game::Collection const& col);

/// Means over segments with index in \a window for every client.
/// Throws std::invalid_argument for an empty window and std::out_of_range
/// when a client has not completed the window yet.
MetricsRecord collect_metrics(Simulation const& sim, SegmentWindow window);

/// As above with one window per client.
MetricsRecord collect_metrics(Simulation const& sim, std::map<ClientId, SegmentWindow> const& windows);

} // namespace coalition_cdn::sim

#endif // COALITION_CDN_STREAM_SIM_HPP
