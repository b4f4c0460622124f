#pragma once

// Umbrella header for the full library.

#include "qcluster/agent.hpp"
#include "qcluster/cluster.hpp"
#include "qcluster/ingest.hpp"
#include "qcluster/matrix.hpp"
#include "qcluster/parallel.hpp"
#include "qcluster/pipeline.hpp"
#include "qcluster/quantum.hpp"
#include "qcluster/remote_backend.hpp"
#include "qcluster/report.hpp"
#include "qcluster/rng.hpp"
#include "qcluster/swav.hpp"
#include "qcluster/version.hpp"
