#pragma once

#include "qkdlink/clock.hpp"
#include "qkdlink/error.hpp"
#include "qkdlink/event_sim.hpp"
#include "qkdlink/finite_key.hpp"
#include "qkdlink/link_budget.hpp"
#include "qkdlink/numeric.hpp"
#include "qkdlink/orbit.hpp"
#include "qkdlink/params.hpp"
#include "qkdlink/rate_model.hpp"
#include "qkdlink/scenario.hpp"
#include "qkdlink/telemetry.hpp"
#include "qkdlink/timestamps.hpp"
#include "qkdlink/timesync.hpp"
#include "qkdlink/trade_studies.hpp"
