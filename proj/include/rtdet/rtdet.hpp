#pragma once

#include "rtdet/annotation.hpp"
#include "rtdet/augment.hpp"
#include "rtdet/broadcast.hpp"
#include "rtdet/config.hpp"
#include "rtdet/dataset_io.hpp"
#include "rtdet/detection.hpp"
#include "rtdet/error.hpp"
#include "rtdet/fps.hpp"
#include "rtdet/frame.hpp"
#include "rtdet/image.hpp"
#include "rtdet/metrics.hpp"
#include "rtdet/pipeline.hpp"
#include "rtdet/protocol.hpp"
#include "rtdet/queue.hpp"
#include "rtdet/random.hpp"
#include "rtdet/recording.hpp"
#include "rtdet/report.hpp"
#include "rtdet/server.hpp"
#include "rtdet/session.hpp"
#include "rtdet/source.hpp"
#include "rtdet/tracking.hpp"
