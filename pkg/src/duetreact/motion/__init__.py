from .ops import (compute_relative_trajectory, extract_contact, forward_kinematics, integrate_velocity,
                  reduce_hand_joints, reduction_matrix, root_velocity, to_global, to_local)
from .skeleton import (DEFAULT_SKELETON, JOINT_NAMES, PART_ORDER, PARTITION, REDUCED_INDEX, REDUCED_NAMES,
                       Skeleton)
from .synth import ContactEpisode, InfeasibleScheduleError, SynthConfig, synth_duet
from .types import DuetSample, MotionSequence
