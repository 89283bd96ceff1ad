# Tests for loccost
