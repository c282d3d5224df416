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

#include <coalition_cdn/snapshot.hpp>

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace coalition_cdn::game {

using nlohmann::json;

std::string to_snapshot(Collection const& col)
{
	json servers = json::array();
	for (Coalition const& c : col.coalitions())
	{
		json members = json::array();
		for (PlayerRef const& p : c.members())
		{
			members.push_back({{"id", p.id.value}, {"lambda_kbps", p.lambda}});
		}
		servers.push_back({{"id", c.server_id().value}, {"bandwidth_kbps", c.bandwidth()}, {"members", members}});
	}
	return json{{"servers", servers}}.dump(2) + "\n";
}

Collection parse_snapshot(std::string const& text)
{
	json doc;
	try
	{
		doc = json::parse(text);
	}
	catch (json::parse_error const& e)
	{
		throw std::invalid_argument(std::string("snapshot: ") + e.what());
	}

	try
	{
		std::vector<Coalition> coalitions;
		for (json const& s : doc.at("servers"))
		{
			std::vector<PlayerRef> members;
			for (json const& m : s.at("members"))
			{
				members.push_back({PlayerId(m.at("id").get<std::string>()), m.at("lambda_kbps").get<Kbps>()});
			}
			coalitions.emplace_back(ServerId(s.at("id").get<std::string>()), s.at("bandwidth_kbps").get<Kbps>(),
			                        std::move(members));
		}
		return Collection(std::move(coalitions));
	}
	catch (json::exception const& e)
	{
		throw std::invalid_argument(std::string("snapshot: ") + e.what());
	}
}

Collection read_snapshot_file(std::filesystem::path const& path)
{
	std::ifstream in(path);
	if (!in)
	{
		throw std::runtime_error("cannot open snapshot '" + path.string() + "'");
	}
	std::stringstream buf;
	buf << in.rdbuf();
	return parse_snapshot(buf.str());
}

void write_snapshot_file(std::filesystem::path const& path, Collection const& col)
{
	std::ofstream out(path, std::ios::binary);
	if (!out)
	{
		throw std::runtime_error("cannot write snapshot '" + path.string() + "'");
	}
	out << to_snapshot(col);
}

std::string format_event(TransferEvent const& ev)
{
	std::ostringstream os;
	os << ev.sequence << ',' << ev.player.id << ',' << ev.from_server << ',' << ev.to_server << ','
	   << ev.payoff_src_before << ',' << ev.payoff_dst_after;
	return os.str();
}

std::string format_events(std::span<TransferEvent const> events)
{
	std::string out;
	for (TransferEvent const& ev : events)
	{
		out += format_event(ev);
		out += '\n';
	}
	return out;
}

} // namespace coalition_cdn::game
