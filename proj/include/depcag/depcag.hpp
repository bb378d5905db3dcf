#pragma once

#include "depcag/types.hpp"
#include "depcag/mesh.hpp"
#include "depcag/quadrature.hpp"
#include "depcag/ode.hpp"
#include "depcag/coefficients.hpp"
#include "depcag/certificate.hpp"
#include "depcag/linear_flow.hpp"
#include "depcag/cauchy.hpp"
#include "depcag/green.hpp"
#include "depcag/trajectory.hpp"
#include "depcag/system.hpp"
#include "depcag/solvers.hpp"
#include "depcag/certificates.hpp"
