from typing import List, Optional

from torch import nn

from src.numeric import ParamStore


class BaseModel(nn.Module):
    def freeze_prefix(self, freeze_prefix_list: Optional[List[str]]):
        if freeze_prefix_list is None:
            return
        for n, p in self.named_parameters():
            for prefix in freeze_prefix_list:
                if n.startswith(prefix):
                    p.requires_grad = False

    def param_store(self) -> ParamStore:
        return ParamStore(self)
