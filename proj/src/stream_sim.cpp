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

#include <coalition_cdn/stream_sim.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace coalition_cdn::sim {

namespace {

// Slack for float drift when a buffer is compared against 0 or the cap.
constexpr double buffer_eps = 1e-9;

char const* kind_name(EventKind k)
{
	switch (k)
	{
	case EventKind::start:
		return "START";
	case EventKind::done:
		return "DONE";
	case EventKind::rebuffer_begin:
		return "REBUF_BEGIN";
	case EventKind::rebuffer_end:
		return "REBUF_END";
	}
	return "?";
}

// Largest double s with s * n <= capacity, evaluated exactly in long double.
double equal_share(Kbps capacity, std::size_t n)
{
	double share = static_cast<double>(capacity) / static_cast<double>(n);
	while (static_cast<long double>(share) * static_cast<long double>(n) > static_cast<long double>(capacity))
	{
		share = std::nextafter(share, 0.0);
	}
	return share;
}

} // namespace

// Ladder ---------------------------------------------------------------------

Ladder Ladder::paper()
{
	return Ladder{{1360, 3265, 6117, 9330}, {"360p", "480p", "720p", "1080p"}};
}

void Ladder::validate() const
{
	if (bitrates.empty())
	{
		throw std::invalid_argument("ladder is empty");
	}
	if (!labels.empty() && labels.size() != bitrates.size())
	{
		throw std::invalid_argument("ladder labels do not match bitrates");
	}
	for (std::size_t i = 0; i < bitrates.size(); ++i)
	{
		if (bitrates[i] <= 0)
		{
			throw std::invalid_argument("ladder bitrates must be positive");
		}
		if (i > 0 && bitrates[i] <= bitrates[i - 1])
		{
			throw std::invalid_argument("ladder bitrates must be strictly ascending");
		}
	}
}

std::size_t Ladder::level_of(Kbps bitrate) const
{
	auto it = std::lower_bound(bitrates.begin(), bitrates.end(), bitrate);
	if (it == bitrates.end() || *it != bitrate)
	{
		throw std::out_of_range("bitrate " + std::to_string(bitrate) + " is not on the ladder");
	}
	return static_cast<std::size_t>(it - bitrates.begin());
}

void SimConfig::validate() const
{
	if (!(segment_duration_s > 0))
	{
		throw std::invalid_argument("segment_duration_s must be positive");
	}
	if (!(safety_alpha > 0 && safety_alpha <= 1))
	{
		throw std::invalid_argument("safety_alpha must be in (0, 1]");
	}
	if (!(panic_buffer_s >= 0 && panic_buffer_s < buffer_cap_s))
	{
		throw std::invalid_argument("panic_buffer_s must be in [0, buffer_cap_s)");
	}
	if (buffer_cap_s < segment_duration_s)
	{
		throw std::invalid_argument("buffer_cap_s must hold at least one segment");
	}
	if (!(start_spread_s >= 0))
	{
		throw std::invalid_argument("start_spread_s must be non-negative");
	}
	if (history_window == 0)
	{
		throw std::invalid_argument("history_window must be positive");
	}
}

std::string format_trace_line(SimEvent const& ev)
{
	std::ostringstream os;
	os.precision(6);
	os << std::fixed << ev.t_s << ',' << ev.client << ',' << ev.server << ',' << kind_name(ev.kind) << ','
	   << ev.bitrate_kbps << ',';
	os.precision(3);
	os << ev.share_kbps;
	return os.str();
}

Diagnostics::Diagnostics() : min_share_kbps(std::numeric_limits<double>::infinity()) {}

// ABR building blocks ----------------------------------------------------------

std::map<ClientId, double> allocate_shares(ServerState const& server)
{
	std::map<ClientId, double> out;
	if (server.active_downloads.empty())
	{
		return out;
	}
	double const share = equal_share(server.bandwidth_kbps, server.active_downloads.size());
	for (ClientId const& c : server.active_downloads)
	{
		out.emplace(c, share);
	}
	return out;
}

double estimate_throughput(std::span<double const> history, std::size_t window, Ladder const& ladder)
{
	if (history.empty() || window == 0)
	{
		return static_cast<double>(ladder.lowest());
	}
	std::size_t const n = std::min(window, history.size());
	double inv = 0;
	for (double x : history.last(n))
	{
		inv += 1.0 / x;
	}
	return static_cast<double>(n) / inv;
}

Kbps select_bitrate(double estimate_kbps, double buffer_s, Ladder const& ladder, SimConfig const& cfg)
{
	if (buffer_s < cfg.panic_buffer_s)
	{
		return ladder.lowest();
	}
	double const budget = cfg.safety_alpha * estimate_kbps;
	Kbps pick = ladder.lowest();
	for (Kbps b : ladder.bitrates)
	{
		if (static_cast<double>(b) <= budget)
		{
			pick = b;
		}
	}
	return pick;
}

// Simulation -----------------------------------------------------------------

Simulation::Simulation(std::vector<std::pair<ServerId, Kbps>> servers,
                       std::vector<std::pair<ClientId, ServerId>> clients,
                       Ladder ladder,
                       SimConfig cfg)
	: ladder_(std::move(ladder)), cfg_(cfg)
{
	ladder_.validate();
	cfg_.validate();

	std::sort(servers.begin(), servers.end());
	for (std::size_t i = 0; i < servers.size(); ++i)
	{
		if (servers[i].second <= 0)
		{
			throw std::invalid_argument("server '" + servers[i].first.value + "' has non-positive bandwidth");
		}
		if (i > 0 && servers[i].first == servers[i - 1].first)
		{
			throw std::invalid_argument("duplicate server '" + servers[i].first.value + "'");
		}
		servers_.push_back(ServerState{servers[i].first, servers[i].second, {}});
	}

	std::sort(clients.begin(), clients.end());
	std::mt19937_64 rng(cfg_.seed);
	for (std::size_t i = 0; i < clients.size(); ++i)
	{
		if (i > 0 && clients[i].first == clients[i - 1].first)
		{
			throw std::invalid_argument("duplicate client '" + clients[i].first.value + "'");
		}
		server_index(clients[i].second);

		ClientState cs;
		cs.id = clients[i].first;
		cs.assigned_server = clients[i].second;
		cs.current_bitrate = ladder_.lowest();
		clients_.push_back(std::move(cs));

		Runtime r;
		r.start_at = static_cast<double>(rng() >> 11) * 0x1.0p-53 * cfg_.start_spread_s;
		rt_.push_back(r);
	}
}

std::size_t Simulation::client_index(ClientId const& id) const
{
	auto it = std::lower_bound(clients_.begin(), clients_.end(), id,
	                           [](ClientState const& c, ClientId const& key) { return c.id < key; });
	if (it == clients_.end() || it->id != id)
	{
		throw std::invalid_argument("unknown client '" + id.value + "'");
	}
	return static_cast<std::size_t>(it - clients_.begin());
}

std::size_t Simulation::server_index(ServerId const& id) const
{
	auto it = std::lower_bound(servers_.begin(), servers_.end(), id,
	                           [](ServerState const& s, ServerId const& key) { return s.id < key; });
	if (it == servers_.end() || it->id != id)
	{
		throw std::invalid_argument("unknown server '" + id.value + "'");
	}
	return static_cast<std::size_t>(it - servers_.begin());
}

ClientState const& Simulation::client(ClientId const& id) const
{
	return clients_[client_index(id)];
}

double Simulation::current_share(ClientId const& id) const
{
	Runtime const& r = rt_[client_index(id)];
	return r.activity == Activity::downloading ? r.flow.share : 0.0;
}

std::size_t Simulation::next_request_index(ClientId const& id) const
{
	std::size_t const c = client_index(id);
	return clients_[c].segments_done + (rt_[c].activity == Activity::downloading ? 1 : 0);
}

bool Simulation::reassign(ClientId const& client, ServerId const& server)
{
	server_index(server);
	ClientState& cs = clients_[client_index(client)];
	if (cs.assigned_server == server)
	{
		return false;
	}
	cs.assigned_server = server;
	return true;
}

std::optional<std::pair<double, Simulation::Due>> Simulation::next_due(std::size_t c) const
{
	Runtime const& r = rt_[c];
	ClientState const& cs = clients_[c];
	switch (r.activity)
	{
	case Activity::waiting:
		return std::pair{r.start_at, Due::start};
	case Activity::downloading:
	{
		double const done = now_ + std::max(0.0, r.flow.remaining_kb) / r.flow.share;
		if (r.playing && !r.stalled)
		{
			double const empty = now_ + std::max(0.0, cs.buffer_s);
			if (empty < done)
			{
				return std::pair{empty, Due::empty};
			}
		}
		return std::pair{done, Due::done};
	}
	case Activity::idle:
	{
		double const resume = cfg_.buffer_cap_s - cfg_.segment_duration_s;
		return std::pair{now_ + std::max(0.0, cs.buffer_s - resume), Due::wake};
	}
	}
	return std::nullopt;
}

void Simulation::progress(double dt)
{
	if (dt <= 0)
	{
		return;
	}
	for (std::size_t c = 0; c < clients_.size(); ++c)
	{
		Runtime& r = rt_[c];
		ClientState& cs = clients_[c];
		if (r.activity == Activity::downloading)
		{
			double const got = r.flow.share * dt;
			r.flow.remaining_kb -= got;
			cs.downloaded_kb += got;
		}
		if (r.playing && !r.stalled)
		{
			cs.buffer_s -= dt;
		}
	}
}

void Simulation::resolve_shares(std::size_t s)
{
	ServerState const& server = servers_[s];
	auto const shares = allocate_shares(server);
	long double total = 0;
	for (auto const& [id, share] : shares)
	{
		rt_[client_index(id)].flow.share = share;
		total += share;
		diag_.min_share_kbps = std::min(diag_.min_share_kbps, share);
	}
	if (total > static_cast<long double>(server.bandwidth_kbps))
	{
		++diag_.capacity_violations;
	}
}

void Simulation::check_buffers()
{
	for (ClientState& cs : clients_)
	{
		if (cs.buffer_s < 0)
		{
			if (cs.buffer_s < -buffer_eps)
			{
				++diag_.buffer_violations;
			}
			cs.buffer_s = 0;
		}
		if (cs.buffer_s > cfg_.buffer_cap_s + buffer_eps)
		{
			++diag_.buffer_violations;
		}
	}
}

void Simulation::request(std::size_t c, std::vector<SimEvent>* trace)
{
	ClientState& cs = clients_[c];
	Runtime& r = rt_[c];

	double const est = estimate_throughput(cs.throughput_history, cfg_.history_window, ladder_);
	Kbps const bitrate = select_bitrate(est, cs.buffer_s, ladder_, cfg_);
	cs.current_bitrate = bitrate;

	std::size_t const s = server_index(cs.assigned_server);
	r.activity = Activity::downloading;
	r.flow = Flow{s, bitrate, static_cast<double>(bitrate) * cfg_.segment_duration_s, now_, 0};
	servers_[s].active_downloads.insert(cs.id);
	resolve_shares(s);

	if (trace)
	{
		trace->push_back({now_, cs.id, servers_[s].id, EventKind::start, bitrate, r.flow.share});
	}
}

void Simulation::handle(std::size_t c, Due due, std::vector<SimEvent>* trace)
{
	ClientState& cs = clients_[c];
	Runtime& r = rt_[c];

	switch (due)
	{
	case Due::start:
		request(c, trace);
		break;

	case Due::empty:
		cs.buffer_s = 0;
		r.stalled = true;
		r.stall_started = now_;
		++cs.rebuffer_events;
		if (trace)
		{
			trace->push_back({now_, cs.id, servers_[r.flow.server].id, EventKind::rebuffer_begin, r.flow.bitrate,
			                  r.flow.share});
		}
		break;

	case Due::wake:
		cs.buffer_s = cfg_.buffer_cap_s - cfg_.segment_duration_s;
		request(c, trace);
		break;

	case Due::done:
	{
		Flow const flow = r.flow;
		ServerState& server = servers_[flow.server];
		cs.downloaded_kb += flow.remaining_kb;
		double const kb = static_cast<double>(flow.bitrate) * cfg_.segment_duration_s;
		double const throughput = kb / (now_ - flow.requested_at);

		r.activity = Activity::idle;
		server.active_downloads.erase(cs.id);
		resolve_shares(flow.server);

		SegmentRecord seg;
		seg.index = cs.segments_done;
		seg.bitrate_kbps = flow.bitrate;
		seg.level = ladder_.level_of(flow.bitrate);
		seg.server = server.id;
		seg.requested_at_s = flow.requested_at;
		seg.completed_at_s = now_;
		seg.throughput_kbps = throughput;

		if (r.stalled)
		{
			double const stall = now_ - r.stall_started;
			r.stalled = false;
			cs.rebuffer_time_s += stall;
			seg.stalled_before = true;
			seg.stall_time_s = stall;
			if (trace)
			{
				trace->push_back({now_, cs.id, server.id, EventKind::rebuffer_end, flow.bitrate, flow.share});
			}
		}

		cs.segments.push_back(seg);
		++cs.segments_done;
		cs.throughput_history.push_back(throughput);
		if (cs.throughput_history.size() > cfg_.history_window)
		{
			cs.throughput_history.erase(cs.throughput_history.begin());
		}

		cs.buffer_s += cfg_.segment_duration_s;
		if (cs.buffer_s > cfg_.buffer_cap_s + buffer_eps)
		{
			++diag_.buffer_violations;
		}
		cs.buffer_s = std::min(cs.buffer_s, cfg_.buffer_cap_s);
		r.playing = true;

		if (trace)
		{
			trace->push_back({now_, cs.id, server.id, EventKind::done, flow.bitrate, throughput});
		}

		if (cs.buffer_s <= cfg_.buffer_cap_s - cfg_.segment_duration_s + buffer_eps)
		{
			request(c, trace);
		}
		break;
	}
	}
}

bool Simulation::step(double until, std::vector<SimEvent>* trace)
{
	std::optional<std::size_t> best;
	std::pair<double, Due> best_due{0, Due::start};
	for (std::size_t c = 0; c < clients_.size(); ++c)
	{
		auto due = next_due(c);
		// Strict comparison keeps the lowest client id on ties.
		if (due && (!best || due->first < best_due.first))
		{
			best = c;
			best_due = *due;
		}
	}

	if (!best || best_due.first > until)
	{
		if (std::isfinite(until))
		{
			progress(until - now_);
			now_ = until;
			check_buffers();
		}
		return false;
	}

	double const t = std::max(now_, best_due.first);
	progress(t - now_);
	now_ = t;
	handle(*best, best_due.second, trace);
	check_buffers();
	return true;
}

std::vector<SimEvent> Simulation::advance(double until)
{
	if (until < now_)
	{
		throw std::invalid_argument("advance: target time is in the past");
	}
	std::vector<SimEvent> trace;
	while (step(until, &trace))
	{
	}
	return trace;
}

void Simulation::run_until_segments(std::size_t segments, std::vector<SimEvent>* trace)
{
	auto behind = [&] {
		return std::any_of(clients_.begin(), clients_.end(),
		                   [&](ClientState const& cs) { return cs.segments_done < segments; });
	};
	while (behind() && step(std::numeric_limits<double>::infinity(), trace))
	{
	}
}

// Free operations --------------------------------------------------------------

std::map<ClientId, Kbps> snapshot_lambdas(Simulation const& sim)
{
	std::map<ClientId, Kbps> out;
	for (ClientState const& cs : sim.clients())
	{
		out.emplace(cs.id, cs.current_bitrate);
	}
	return out;
}

std::size_t apply_assignment(Simulation& sim, game::Collection const& col)
{
	std::map<ClientId, ServerId> target;
	for (game::Coalition const& c : col.coalitions())
	{
		bool known = std::any_of(sim.servers().begin(), sim.servers().end(),
		                         [&](ServerState const& s) { return s.id == c.server_id(); });
		if (!known)
		{
			throw std::invalid_argument("assignment names unknown server '" + c.server_id().value + "'");
		}
		for (game::PlayerRef const& p : c.members())
		{
			target.emplace(p.id, c.server_id());
		}
	}
	if (target.size() != sim.clients().size())
	{
		throw std::invalid_argument("assignment does not cover exactly the simulated clients");
	}
	for (ClientState const& cs : sim.clients())
	{
		if (!target.contains(cs.id))
		{
			throw std::invalid_argument("assignment is missing client '" + cs.id.value + "'");
		}
	}

	std::size_t changed = 0;
	for (auto const& [client, server] : target)
	{
		changed += sim.reassign(client, server) ? 1 : 0;
	}
	return changed;
}

MetricsRecord collect_metrics(Simulation const& sim, std::map<ClientId, SegmentWindow> const& windows)
{
	MetricsRecord out;
	out.n_clients = sim.clients().size();
	for (ServerState const& s : sim.servers())
	{
		out.per_server_counts[s.id] = 0;
	}

	double bitrate_sum = 0;
	double level_sum = 0;
	for (ClientState const& cs : sim.clients())
	{
		++out.per_server_counts[cs.assigned_server];

		auto it = windows.find(cs.id);
		if (it == windows.end())
		{
			throw std::invalid_argument("no measurement window for client '" + cs.id.value + "'");
		}
		SegmentWindow const w = it->second;
		if (w.first >= w.last)
		{
			throw std::invalid_argument("empty measurement window");
		}
		if (cs.segments.size() < w.last)
		{
			throw std::out_of_range("client '" + cs.id.value + "' has not completed segment "
			                        + std::to_string(w.last - 1));
		}
		for (std::size_t i = w.first; i < w.last; ++i)
		{
			SegmentRecord const& seg = cs.segments[i];
			bitrate_sum += static_cast<double>(seg.bitrate_kbps);
			level_sum += static_cast<double>(seg.level);
			++out.samples;
			if (seg.stalled_before)
			{
				++out.rebuffer_events;
				out.rebuffer_time_s += seg.stall_time_s;
			}
		}
	}
	if (out.samples == 0)
	{
		throw std::invalid_argument("empty measurement window");
	}
	out.mean_bitrate_kbps = bitrate_sum / static_cast<double>(out.samples);
	out.mean_level_index = level_sum / static_cast<double>(out.samples);
	return out;
}

MetricsRecord collect_metrics(Simulation const& sim, SegmentWindow window)
{
	if (window.first >= window.last)
	{
		throw std::invalid_argument("empty measurement window");
	}
	std::map<ClientId, SegmentWindow> windows;
	for (ClientState const& cs : sim.clients())
	{
		windows.emplace(cs.id, window);
	}
	return collect_metrics(sim, windows);
}

} // namespace coalition_cdn::sim
