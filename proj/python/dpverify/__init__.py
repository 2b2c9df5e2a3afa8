# Copyright 2026 The dpverify Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Differentially private verification of ICS attack alarms.

Configurations are plain dicts keyed like the params file, e.g.
``{"eps_cov": 100, "mode": "pv", "epochs": 50}``.
"""

from dpverify._dpverify import (
    DpverifyError,
    alignment,
    bounds_report,
    chi2_quantile,
    config_dump,
    decode_record,
    encode_pv,
    false_alarms,
    gdp_sigma,
    nc_chi2_cdf,
    nc_chi2_quantile,
    nc_chi2_sf,
    params_hash,
    simulate,
    version,
)

__all__ = [
    "DpverifyError",
    "alignment",
    "bounds_report",
    "chi2_quantile",
    "config_dump",
    "decode_record",
    "encode_pv",
    "false_alarms",
    "gdp_sigma",
    "nc_chi2_cdf",
    "nc_chi2_quantile",
    "nc_chi2_sf",
    "params_hash",
    "simulate",
    "version",
]
