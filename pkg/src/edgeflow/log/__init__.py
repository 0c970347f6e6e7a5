from .assign import (AssignmentError, Directory, TopicAssignment, add_replica, choose_leader,
                     create_assignment, demote_in_sync, drop_replica, mark_in_sync,
                     promote_leader, quorum, recover_replica, refresh, reinstate)
from .broker import Broker
from .client import LogClient
from .codec import DumpFormatError, Record, decode_records, encode_record, encode_records
from .standalone import LogCluster, TopicError

__all__ = [
    "AssignmentError", "Directory", "TopicAssignment", "add_replica", "choose_leader",
    "create_assignment", "demote_in_sync", "drop_replica", "mark_in_sync", "promote_leader",
    "quorum", "recover_replica", "refresh", "reinstate", "Broker", "LogClient", "DumpFormatError", "Record",
    "decode_records", "encode_record", "encode_records", "LogCluster", "TopicError",
]
