"""mmWave link-level path loss with a variable-height transformer, MIT License"""


__version__ = "0.1"


from plformer.errors import PLFormerError
from plformer.errors import ValidationError
from plformer.scene import LinkRecord
from plformer.scene import Point3
from plformer.scene import Scene
from plformer.scene import load_scene
from plformer.scene import save_scene
from plformer.oracle import OracleConfig
from plformer.oracle import generate_dataset
from plformer.oracle import generate_scene
from plformer.oracle import path_loss
from plformer.extract import MapExtract
from plformer.extract import align_and_extract
from plformer.transformer import ModelConfig
from plformer.transformer import SurrogateModel
from plformer.transformer import load_model
from plformer.transformer import predict
from plformer.transformer import save_model
from plformer.baselines import DistanceMLP
from plformer.baselines import GppConfig
from plformer.baselines import gpp_umi_pathloss
from plformer.training import TrainConfig
from plformer.training import train
from plformer.evaluation import evaluate
