"""Throughput and decoding-delay analysis of random linear network coding over
erasure broadcast channels.

Submodules:

* ``channel``   -- Gilbert-Elliott / erasure channel models and gap laws
* ``gf``        -- table-driven GF(2^q) arithmetic
* ``coding``    -- RLNC encoder, rank-tracking decoder, LT reception threshold
* ``sim``       -- block-by-block broadcast sessions and replication
* ``analytics`` -- exact delay, extreme-value approximations, throughput bounds
* ``stats``     -- summaries, Gumbel KS statistic, histograms
* ``cli``       -- command-line front end
"""

__version__ = "0.1.0"
