#pragma once

#include "error.hpp"
#include "format.hpp"
#include "geometry.hpp"
#include "geo_ingest.hpp"
#include "polygon.hpp"
#include "meshgen.hpp"
#include "solar.hpp"
#include "radiation.hpp"
#include "thermal.hpp"
#include "partition.hpp"
#include "pipeline.hpp"
#include "synthetic.hpp"
